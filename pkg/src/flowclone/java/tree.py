from __future__ import annotations

import enum
from dataclasses import dataclass, field


class Granularity(str, enum.Enum):
    METHOD = "Method"
    CLASS = "Class"


class NodeKind(str, enum.Enum):
    """Closed vocabulary of node kinds, named after javalang productions.

    Wrapper kinds (``IfCondition``, ``WhileCondition``, ``ElseStatement``,
    ``Arguments``) exist so that keywords and separators have a home in
    the tree while control-flow nodes keep their fixed child layout.
    """

    # declarations
    COMPILATION_UNIT = "CompilationUnit"
    PACKAGE_DECLARATION = "PackageDeclaration"
    IMPORT = "Import"
    CLASS_DECLARATION = "ClassDeclaration"
    INTERFACE_DECLARATION = "InterfaceDeclaration"
    ENUM_DECLARATION = "EnumDeclaration"
    ENUM_CONSTANT = "EnumConstantDeclaration"
    FIELD_DECLARATION = "FieldDeclaration"
    METHOD_DECLARATION = "MethodDeclaration"
    CONSTRUCTOR_DECLARATION = "ConstructorDeclaration"
    FORMAL_PARAMETER = "FormalParameter"
    VARIABLE_DECLARATION = "VariableDeclaration"
    VARIABLE_DECLARATOR = "VariableDeclarator"
    ANNOTATION = "Annotation"
    DECLARATION_OTHER = "DeclarationOther"
    # types
    BASIC_TYPE = "BasicType"
    REFERENCE_TYPE = "ReferenceType"
    TYPE_ARGUMENTS = "TypeArguments"
    TYPE_PARAMETERS = "TypeParameters"
    TYPE_PARAMETER = "TypeParameter"
    # statements
    BLOCK_STATEMENT = "BlockStatement"
    LOCAL_VARIABLE_DECLARATION = "LocalVariableDeclaration"
    IF_STATEMENT = "IfStatement"
    IF_CONDITION = "IfCondition"
    ELSE_STATEMENT = "ElseStatement"
    WHILE_STATEMENT = "WhileStatement"
    WHILE_CONDITION = "WhileCondition"
    FOR_STATEMENT = "ForStatement"
    FOR_CONTROL = "ForControl"
    ENHANCED_FOR_CONTROL = "EnhancedForControl"
    DO_STATEMENT = "DoStatement"
    SWITCH_STATEMENT = "SwitchStatement"
    SWITCH_CASE = "SwitchStatementCase"
    RETURN_STATEMENT = "ReturnStatement"
    BREAK_STATEMENT = "BreakStatement"
    CONTINUE_STATEMENT = "ContinueStatement"
    THROW_STATEMENT = "ThrowStatement"
    TRY_STATEMENT = "TryStatement"
    TRY_RESOURCE = "TryResource"
    CATCH_CLAUSE = "CatchClause"
    CATCH_PARAMETER = "CatchClauseParameter"
    SYNCHRONIZED_STATEMENT = "SynchronizedStatement"
    STATEMENT_EXPRESSION = "StatementExpression"
    STATEMENT_OTHER = "StatementOther"
    # expressions
    ASSIGNMENT = "Assignment"
    TERNARY_EXPRESSION = "TernaryExpression"
    BINARY_OPERATION = "BinaryOperation"
    UNARY_OPERATION = "UnaryOperation"
    CAST = "Cast"
    PAR_EXPRESSION = "ParExpression"
    METHOD_INVOCATION = "MethodInvocation"
    ARGUMENTS = "Arguments"
    MEMBER_REFERENCE = "MemberReference"
    ARRAY_SELECTOR = "ArraySelector"
    LITERAL = "Literal"
    THIS = "This"
    CLASS_CREATOR = "ClassCreator"
    ARRAY_CREATOR = "ArrayCreator"
    ARRAY_INITIALIZER = "ArrayInitializer"
    LAMBDA_EXPRESSION = "LambdaExpression"
    EXPRESSION_OTHER = "ExpressionOther"
    # leaves
    TERMINAL = "Terminal"


@dataclass(frozen=True)
class SourceFragment:
    id: str
    code: str
    granularity: Granularity = Granularity.METHOD


@dataclass
class AstNode:
    node_id: int
    kind: NodeKind
    token: str | None = None
    children: list[int] = field(default_factory=list)
    # (line, column) of the token; terminals only
    position: tuple[int, int] | None = None

    @property
    def is_terminal(self) -> bool:
        return self.kind is NodeKind.TERMINAL


@dataclass
class AstTree:
    fragment_id: str
    nodes: list[AstNode]
    root: int = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def parents(self) -> list[int | None]:
        out: list[int | None] = [None] * len(self.nodes)
        for node in self.nodes:
            for c in node.children:
                out[c] = node.node_id
        return out

    def count_kind(self, kind: NodeKind) -> int:
        return sum(1 for n in self.nodes if n.kind is kind)

    def tokens(self) -> list[str]:
        return [self.nodes[i].token for i in terminals_in_order(self)]  # type: ignore[misc]


def terminals_in_order(tree: AstTree) -> list[int]:
    """Node ids of all terminals in source order.

    Ids are assigned in pre-order, so source order is ascending id order.
    """
    return [n.node_id for n in tree.nodes if n.kind is NodeKind.TERMINAL]
