"""hengine: a typed graph transformation engine."""
