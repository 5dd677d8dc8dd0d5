import pytest

from hengine import casepack as cp
from hengine.cli import EXIT_FAILED, EXIT_INPUT, EXIT_OK, InputError, main, parse_param
from hengine.model import InstanceGraph, ObjectRef
from hengine.textio import parse_model

TASK1 = cp.CASES_DIR / "task1" / "system.gts"
TASK2 = cp.CASES_DIR / "task2" / "system.gts"
TASK3 = cp.CASES_DIR / "task3" / "system.gts"


def write_graph1(tmp_path, nodes, edges, name="m.gim"):
    """nodes: names; edges: (src, trg) index pairs."""
    lines = ["model graph1 {", "  g : Graph"]
    for i, n in enumerate(nodes):
        lines += [f'  n{i} : Node {{ name = "{n}" }}', f"  g -nodes-> n{i}"]
    for j, (s, t) in enumerate(edges):
        lines += [f"  e{j} : Edge", f"  g -edges-> e{j}"]
        if s is not None:
            lines.append(f"  e{j} -src-> n{s}")
        if t is not None:
            lines.append(f"  e{j} -trg-> n{t}")
    lines.append("}")
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return path


def test_run_create_simple(tmp_path, capsys):
    out = tmp_path / "out.gim"
    assert main(["run", str(TASK1), "CreateSimple", "--out", str(out)]) == EXIT_OK
    assert capsys.readouterr().out == "result = <object Greeting#1>\n"
    g = parse_model(out.read_text(), cp.system_for("1.1")).graph
    (obj,) = g.objects.values()
    assert obj.cls.name == "Greeting" and obj.attrs["text"] == "Hello World"


def test_run_without_out_prints_model(capsys):
    assert main(["run", str(TASK1), "CreateSimple"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("result = <object Greeting#1>\nmodel ")
    assert '"Hello World"' in out


def test_run_count_nodes(tmp_path, capsys):
    model = write_graph1(tmp_path, ["a", "b", "c", "d"], [(0, 1)])
    out = tmp_path / "out.gim"
    assert main(["run", str(TASK2), "CountNodes", "--model", str(model), "--out", str(out)]) == EXIT_OK
    line = capsys.readouterr().out.strip()
    assert line.startswith("counter = <object IntResult#")
    k = int(line.split("#")[1].rstrip(">"))
    g = parse_model(out.read_text(), cp.system_for("2.1")).graph
    assert g.get(k).attrs["result"] == 4


def test_unknown_unit_is_input_error(capsys):
    assert main(["run", str(TASK1), "NoSuchUnit"]) == EXIT_INPUT
    assert "NoSuchUnit" in capsys.readouterr().err


def test_missing_file_is_input_error(tmp_path):
    assert main(["run", str(tmp_path / "nope.gts"), "X"]) == EXIT_INPUT


def test_not_applicable_exit_1(tmp_path, capsys):
    # M2T needs a StringResult holder; on an empty model it cannot apply
    assert main(["run", str(TASK1), "M2T"]) == EXIT_FAILED
    assert "not applicable" in capsys.readouterr().err


def test_max_steps_exit_1(tmp_path, capsys):
    model = write_graph1(tmp_path, ["a", "b"], [(0, 1), (1, 0)])
    assert main(["run", str(TASK3), "ReverseEdges", "--model", str(model),
                 "--max-steps", "2"]) == EXIT_FAILED
    assert "step limit" in capsys.readouterr().err


def test_params(tmp_path, capsys):
    m2t = cp.CASES_DIR / "task1" / "m2t.gim"
    assert main(["run", str(TASK1), "M2T", "--model", str(m2t),
                 "--param", 'preTxt="Hello"', "--out", str(tmp_path / "o.gim")]) == EXIT_OK
    out = capsys.readouterr().out
    assert 'preTxt = "Hello"' in out
    assert main(["run", str(TASK1), "M2T", "--model", str(m2t), "--param", "bogus"]) == EXIT_INPUT
    assert main(["run", str(TASK1), "M2T", "--model", str(m2t), "--param", "nope=1"]) == EXIT_INPUT
    assert main(["run", str(TASK1), "M2T", "--model", str(m2t), "--param", "preTxt=#999"]) == EXIT_INPUT


def test_parse_param():
    g = InstanceGraph()
    assert parse_param("x = 3", g) == ("x", 3)
    assert parse_param('s="a b"', g) == ("s", "a b")
    with pytest.raises(InputError):
        parse_param("x=1+1", g)
    with pytest.raises(InputError):
        parse_param("=1", g)
    sysf = cp.system_for("1.1")
    g = sysf.attach(InstanceGraph(sysf.metamodels.values()))
    oid = g.create_object("Greeting")
    assert parse_param(f"r=#{oid}", g) == ("r", ObjectRef(oid))


def test_strip_traces(tmp_path, capsys):
    model = write_graph1(tmp_path, ["a", "b", "c"], [(0, 1), (1, 2)])
    kept, stripped = tmp_path / "kept.gim", tmp_path / "stripped.gim"
    assert main(["run", str(TASK3), "ReverseEdges", "--model", str(model), "--out", str(kept)]) == 0
    assert main(["run", str(TASK3), "ReverseEdges", "--model", str(model), "--out", str(stripped),
                 "--strip-traces"]) == 0
    s = cp.system_for("3.1")
    gk = parse_model(kept.read_text(), s).graph
    gs = parse_model(stripped.read_text(), s).graph
    traces = [o.id for o in gk.objects.values() if o.cls.name == "Trace"]
    assert len(traces) == 2
    assert set(gk.objects) - set(gs.objects) == set(traces)
    assert not any(o.cls.name == "Trace" for o in gs.objects.values())
    assert all(s not in traces and t not in traces for s, _, t in gs.links)
    assert [l for l in gk.links if l[0] not in traces] == gs.links


def test_match_two_triangles(tmp_path, capsys):
    model = write_graph1(tmp_path, list("abcdef"), [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)])
    assert main(["match", str(TASK2), str(model), "Circle"]) == EXIT_OK
    assert capsys.readouterr().out == "6\n"


def test_match_empty_model(tmp_path, capsys):
    empty = tmp_path / "empty.gim"
    empty.write_text("model graph1 {\n}\n")
    for rule in ["Circle", "EdgeBetween", "CountNodes_Increase"]:
        assert main(["match", str(TASK2), str(empty), rule]) == EXIT_OK
    assert capsys.readouterr().out == "0\n0\n0\n"


def test_match_self_loop_injectivity(tmp_path, capsys):
    model = write_graph1(tmp_path, ["a"], [(0, 0)])
    assert main(["match", str(TASK2), str(model), "EdgeBetween"]) == EXIT_OK
    assert main(["match", str(TASK2), str(model), "EdgeBetween", "--no-injective"]) == EXIT_OK
    assert capsys.readouterr().out == "0\n1\n"


def test_validate_cases(tmp_path, capsys):
    assert main(["validate", str(TASK2)]) == EXIT_OK
    assert main(["validate", str(cp.CASES_DIR / "task2" / "input.gim")]) == EXIT_OK
    bad_syntax = tmp_path / "a.gts"
    bad_syntax.write_text("metamodel m {\n  class A {\n")
    assert main(["validate", str(bad_syntax)]) == EXIT_INPUT
    bad_ref = tmp_path / "b.gts"
    bad_ref.write_text("metamodel m {\n  class A {\n    r: Missing\n  }\n}\n")
    assert main(["validate", str(bad_ref)]) == EXIT_FAILED
    bad_model = tmp_path / "c.gim"
    bad_model.write_text("model graph1 {\n  e : Edge\n  a : Node\n  b : Node\n  e -src-> a\n  e -src-> b\n}\n")
    assert main(["validate", str(bad_model), "--system", str(TASK2)]) == EXIT_FAILED


@pytest.mark.parametrize("tid", list(cp.TaskId))
def test_every_asset_validates(tid, capsys):
    t = cp.task(tid)
    assert main(["validate", str(cp.CASES_DIR / t.directory / "system.gts")]) == EXIT_OK
    assert main(["validate", str(cp.CASES_DIR / t.directory / t.fixture)]) == EXIT_OK


def test_run_is_deterministic(tmp_path, capsys):
    model = cp.CASES_DIR / "task2" / "input.gim"
    outputs = set()
    for i in range(3):
        out = tmp_path / f"o{i}.gim"
        main(["run", str(TASK2), "CountCircles", "--model", str(model), "--out", str(out)])
        outputs.add((capsys.readouterr().out, out.read_bytes()))
    assert len(outputs) == 1
