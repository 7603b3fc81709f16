from .parser import parse_fragment, tokenize
from .tree import AstNode, AstTree, Granularity, NodeKind, SourceFragment, terminals_in_order

__all__ = [
    "AstNode",
    "AstTree",
    "Granularity",
    "NodeKind",
    "SourceFragment",
    "parse_fragment",
    "terminals_in_order",
    "tokenize",
]
