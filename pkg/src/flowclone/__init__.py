"""Flow-augmented AST construction and graph neural clone detection for Java."""

__version__ = "0.1.0"
