"""Recursive-descent Java parser producing a normalized, token-complete tree.

Tokenization is delegated to ``javalang``; the grammar below covers the
Java 8 surface used in method- and class-level clone benchmarks (plus
``var`` and simple lambdas).  Every source token becomes a ``Terminal``
leaf, so a pre-order walk of the leaves gives back the token stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import javalang
from javalang.tokenizer import LexerError

from ..errors import GranularityError, ParseError
from .tree import AstNode, AstTree, Granularity, NodeKind, SourceFragment

K = NodeKind

_LITERAL_CLASSES = {
    "Boolean", "Null", "String", "Character",
    "DecimalInteger", "OctalInteger", "BinaryInteger", "HexInteger", "Integer",
    "DecimalFloatingPoint", "HexFloatingPoint", "FloatingPoint",
}
_MODIFIERS = {
    "public", "protected", "private", "static", "abstract", "final", "native",
    "synchronized", "transient", "volatile", "strictfp", "default",
}
_ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", ">>>="}
_BINARY_PREC = {
    "||": 1, "&&": 2, "|": 3, "^": 4, "&": 5, "==": 6, "!=": 6,
    "<": 7, ">": 7, "<=": 7, ">=": 7, "instanceof": 7,
    "<<": 8, ">>": 8, ">>>": 8, "+": 9, "-": 9, "*": 10, "/": 10, "%": 10,
}
_PREFIX_OPS = {"+", "-", "++", "--", "!", "~"}
# tokens that may follow ``(Type)`` when the parenthesized part is a reference-type cast
_CAST_FOLLOW = {"(", "!", "~", "this", "super", "new"}


@dataclass
class Tok:
    value: str
    cls: str
    line: int
    column: int


@dataclass
class _Leaf:
    tok: Tok


@dataclass
class _Node:
    kind: NodeKind
    children: list = field(default_factory=list)


def tokenize(code: str) -> list[Tok]:
    try:
        raw = list(javalang.tokenizer.tokenize(code))
    except LexerError as exc:
        pos = getattr(exc, "position", None)
        line, col = (pos.line, pos.column) if pos is not None else (0, 0)
        raise ParseError(f"lexical error: {exc}", line, col) from None
    out = []
    for t in raw:
        cls = type(t).__name__
        if cls in _LITERAL_CLASSES:
            cls = "Literal"
        out.append(Tok(t.value, cls, t.position.line, t.position.column))
    return out


class _Parser:
    def __init__(self, toks: list[Tok]):
        self.toks = toks
        self.i = 0

    # -- token helpers -------------------------------------------------
    def peek(self, k: int = 0) -> Tok | None:
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def val(self, k: int = 0) -> str | None:
        t = self.peek(k)
        return t.value if t is not None else None

    def at(self, *values: str) -> bool:
        return self.val() in values

    def is_ident(self, k: int = 0) -> bool:
        t = self.peek(k)
        return t is not None and t.cls == "Identifier"

    def eof(self) -> bool:
        return self.i >= len(self.toks)

    def fail(self, msg: str):
        t = self.peek()
        if t is None:
            t = self.toks[-1] if self.toks else Tok("", "", 0, 0)
            raise ParseError(f"{msg}; reached end of input", t.line, t.column)
        raise ParseError(f"{msg}; found {t.value!r}", t.line, t.column)

    def take(self) -> _Leaf:
        t = self.peek()
        if t is None:
            self.fail("unexpected end of input")
        self.i += 1
        return _Leaf(t)

    def expect(self, value: str) -> _Leaf:
        if self.val() != value:
            self.fail(f"expected {value!r}")
        return self.take()

    def ident(self) -> _Leaf:
        if not self.is_ident():
            self.fail("expected identifier")
        return self.take()

    def speculate(self, fn):
        start = self.i
        try:
            return fn()
        except ParseError:
            self.i = start
            return None

    # -- declarations --------------------------------------------------
    def compilation_unit(self) -> tuple[_Node, int]:
        node = _Node(K.COMPILATION_UNIT)
        if self.at("package"):
            pkg = _Node(K.PACKAGE_DECLARATION, [self.take()])
            pkg.children += self.qualified_name()
            pkg.children.append(self.expect(";"))
            node.children.append(pkg)
        while self.at("import"):
            imp = _Node(K.IMPORT, [self.take()])
            if self.at("static"):
                imp.children.append(self.take())
            imp.children.append(self.ident())
            while self.at("."):
                imp.children.append(self.take())
                imp.children.append(self.expect("*") if self.at("*") else self.ident())
            imp.children.append(self.expect(";"))
            node.children.append(imp)
        n_types = 0
        while not self.eof():
            if self.at(";"):
                node.children.append(self.take())
                continue
            mods = self.modifiers()
            node.children.append(self.type_declaration(mods))
            n_types += 1
        return node, n_types

    def qualified_name(self) -> list:
        parts = [self.ident()]
        while self.at(".") and self.is_ident(1):
            parts.append(self.take())
            parts.append(self.take())
        return parts

    def modifiers(self) -> list:
        out = []
        while True:
            v = self.val()
            if v in _MODIFIERS and not (v == "synchronized" and self.val(1) == "("):
                if v == "default" and self.val(1) == ":":
                    break
                out.append(self.take())
            elif v == "@" and self.val(1) != "interface":
                out.append(self.annotation())
            else:
                break
        return out

    def annotation(self) -> _Node:
        node = _Node(K.ANNOTATION, [self.expect("@")])
        node.children += self.qualified_name()
        if self.at("("):
            node.children.append(self.take())
            if not self.at(")"):
                node.children += self.element_value_pairs()
            node.children.append(self.expect(")"))
        return node

    def element_value_pairs(self) -> list:
        out = []
        while True:
            if self.is_ident() and self.val(1) == "=":
                out.append(self.take())
                out.append(self.take())
            out.append(self.element_value())
            if not self.at(","):
                return out
            out.append(self.take())

    def element_value(self):
        if self.at("@"):
            return self.annotation()
        if self.at("{"):
            node = _Node(K.ARRAY_INITIALIZER, [self.take()])
            while not self.at("}"):
                node.children.append(self.element_value())
                if self.at(","):
                    node.children.append(self.take())
                else:
                    break
            node.children.append(self.expect("}"))
            return node
        return self.ternary()

    def type_declaration(self, mods: list) -> _Node:
        if self.at("class"):
            return self.class_declaration(mods)
        if self.at("interface"):
            return self.interface_declaration(mods)
        if self.at("enum"):
            return self.enum_declaration(mods)
        if self.at("@") and self.val(1) == "interface":
            node = _Node(K.DECLARATION_OTHER, mods + [self.take(), self.take(), self.ident()])
            self.class_body(node)
            return node
        self.fail("expected type declaration")

    def class_declaration(self, mods: list) -> _Node:
        node = _Node(K.CLASS_DECLARATION, mods + [self.expect("class"), self.ident()])
        if self.at("<"):
            node.children.append(self.type_parameters())
        if self.at("extends"):
            node.children += [self.take(), self.parse_type()]
        if self.at("implements"):
            node.children.append(self.take())
            node.children += self.type_list()
        self.class_body(node)
        return node

    def interface_declaration(self, mods: list) -> _Node:
        node = _Node(K.INTERFACE_DECLARATION, mods + [self.expect("interface"), self.ident()])
        if self.at("<"):
            node.children.append(self.type_parameters())
        if self.at("extends"):
            node.children.append(self.take())
            node.children += self.type_list()
        self.class_body(node)
        return node

    def enum_declaration(self, mods: list) -> _Node:
        node = _Node(K.ENUM_DECLARATION, mods + [self.expect("enum"), self.ident()])
        if self.at("implements"):
            node.children.append(self.take())
            node.children += self.type_list()
        node.children.append(self.expect("{"))
        while not self.at(";", "}"):
            const = _Node(K.ENUM_CONSTANT, self.modifiers() + [self.ident()])
            if self.at("("):
                const.children.append(self.arguments())
            if self.at("{"):
                self.class_body(const)
            node.children.append(const)
            if self.at(","):
                node.children.append(self.take())
            else:
                break
        if self.at(";"):
            node.children.append(self.take())
            while not self.at("}"):
                node.children.append(self.member())
        node.children.append(self.expect("}"))
        return node

    def type_list(self) -> list:
        out = [self.parse_type()]
        while self.at(","):
            out += [self.take(), self.parse_type()]
        return out

    def class_body(self, node: _Node) -> None:
        node.children.append(self.expect("{"))
        while not self.at("}"):
            if self.eof():
                self.fail("unterminated class body")
            node.children.append(self.member())
        node.children.append(self.take())

    def member(self):
        if self.at(";"):
            return self.take()
        if self.at("{") or (self.at("static") and self.val(1) == "{"):
            init = _Node(K.DECLARATION_OTHER)
            if self.at("static"):
                init.children.append(self.take())
            init.children.append(self.block())
            return init
        mods = self.modifiers()
        if self.at("class", "interface", "enum") or (self.at("@") and self.val(1) == "interface"):
            return self.type_declaration(mods)
        tparams = [self.type_parameters()] if self.at("<") else []
        if self.is_ident() and self.val(1) == "(":
            node = _Node(K.CONSTRUCTOR_DECLARATION, mods + tparams + [self.take()])
            self.method_rest(node)
            return node
        if self.at("void"):
            rtype = self.take()
        else:
            rtype = self.parse_type()
        name = self.ident()
        if self.at("("):
            node = _Node(K.METHOD_DECLARATION, mods + tparams + [rtype, name])
            self.method_rest(node)
            return node
        if tparams:
            self.fail("type parameters on a field")
        node = _Node(K.FIELD_DECLARATION, mods + [rtype, self.declarator_rest(name)])
        while self.at(","):
            node.children += [self.take(), self.declarator()]
        node.children.append(self.expect(";"))
        return node

    def method_rest(self, node: _Node) -> None:
        node.children += self.formal_parameters()
        while self.at("[") and self.val(1) == "]":
            node.children += [self.take(), self.take()]
        if self.at("throws"):
            node.children.append(self.take())
            node.children += self.type_list()
        if self.at("default"):
            node.children += [self.take(), self.element_value()]
        if self.at(";"):
            node.children.append(self.take())
        else:
            node.children.append(self.block())

    def formal_parameters(self) -> list:
        out = [self.expect("(")]
        while not self.at(")"):
            param = _Node(K.FORMAL_PARAMETER, self.modifiers() + [self.parse_type()])
            if self.at("..."):
                param.children.append(self.take())
            param.children.append(self.expect("this") if self.at("this") else self.ident())
            while self.at("[") and self.val(1) == "]":
                param.children += [self.take(), self.take()]
            out.append(param)
            if self.at(","):
                out.append(self.take())
            elif not self.at(")"):
                self.fail("expected ',' or ')' in parameter list")
        out.append(self.take())
        return out

    def declarator(self) -> _Node:
        return self.declarator_rest(self.ident())

    def declarator_rest(self, name: _Leaf) -> _Node:
        node = _Node(K.VARIABLE_DECLARATOR, [name])
        while self.at("[") and self.val(1) == "]":
            node.children += [self.take(), self.take()]
        if self.at("="):
            node.children.append(self.take())
            node.children.append(self.array_initializer() if self.at("{") else self.expression())
        return node

    def array_initializer(self) -> _Node:
        node = _Node(K.ARRAY_INITIALIZER, [self.expect("{")])
        while not self.at("}"):
            node.children.append(self.array_initializer() if self.at("{") else self.expression())
            if self.at(","):
                node.children.append(self.take())
            elif not self.at("}"):
                self.fail("expected ',' or '}' in array initializer")
        node.children.append(self.take())
        return node

    # -- types ---------------------------------------------------------
    def parse_type(self, dims: bool = True) -> _Node:
        t = self.peek()
        if t is not None and t.cls == "BasicType":
            node = _Node(K.BASIC_TYPE, [self.take()])
        elif self.is_ident():
            node = _Node(K.REFERENCE_TYPE, [self.take()])
            if self.at("<"):
                node.children.append(self.type_arguments())
            while self.at(".") and self.is_ident(1):
                node.children += [self.take(), self.take()]
                if self.at("<"):
                    node.children.append(self.type_arguments())
        else:
            self.fail("expected type")
        if dims:
            while self.at("[") and self.val(1) == "]":
                node.children += [self.take(), self.take()]
        return node

    def type_arguments(self) -> _Node:
        node = _Node(K.TYPE_ARGUMENTS, [self.expect("<")])
        while not self.at(">"):
            if self.at("?"):
                node.children.append(self.take())
                if self.at("extends", "super"):
                    node.children += [self.take(), self.parse_type()]
            else:
                node.children.append(self.parse_type())
            if self.at(","):
                node.children.append(self.take())
            elif not self.at(">"):
                self.fail("expected ',' or '>' in type arguments")
        node.children.append(self.take())
        return node

    def type_parameters(self) -> _Node:
        node = _Node(K.TYPE_PARAMETERS, [self.expect("<")])
        while True:
            param = _Node(K.TYPE_PARAMETER, [self.ident()])
            if self.at("extends"):
                param.children += [self.take(), self.parse_type()]
                while self.at("&"):
                    param.children += [self.take(), self.parse_type()]
            node.children.append(param)
            if not self.at(","):
                break
            node.children.append(self.take())
        node.children.append(self.expect(">"))
        return node

    # -- statements ----------------------------------------------------
    def block(self) -> _Node:
        node = _Node(K.BLOCK_STATEMENT, [self.expect("{")])
        while not self.at("}"):
            if self.eof():
                self.fail("unterminated block")
            node.children.append(self.statement())
        node.children.append(self.take())
        return node

    def par_expression(self) -> _Node:
        return _Node(K.PAR_EXPRESSION, [self.expect("("), self.expression(), self.expect(")")])

    def statement(self):
        v = self.val()
        if v == "{":
            return self.block()
        if v == ";":
            return _Node(K.STATEMENT_OTHER, [self.take()])
        if v == "if":
            cond = _Node(K.IF_CONDITION, [self.take(), self.expect("("), self.expression(), self.expect(")")])
            node = _Node(K.IF_STATEMENT, [cond, self.statement()])
            if self.at("else"):
                node.children.append(_Node(K.ELSE_STATEMENT, [self.take(), self.statement()]))
            return node
        if v == "while":
            cond = _Node(K.WHILE_CONDITION, [self.take(), self.expect("("), self.expression(), self.expect(")")])
            return _Node(K.WHILE_STATEMENT, [cond, self.statement()])
        if v == "for":
            return self.for_statement()
        if v == "do":
            node = _Node(K.DO_STATEMENT, [self.take(), self.statement(), self.expect("while")])
            node.children += [self.par_expression(), self.expect(";")]
            return node
        if v == "switch":
            return self.switch_statement()
        if v == "return":
            node = _Node(K.RETURN_STATEMENT, [self.take()])
            if not self.at(";"):
                node.children.append(self.expression())
            node.children.append(self.expect(";"))
            return node
        if v in ("break", "continue"):
            kind = K.BREAK_STATEMENT if v == "break" else K.CONTINUE_STATEMENT
            node = _Node(kind, [self.take()])
            if self.is_ident():
                node.children.append(self.take())
            node.children.append(self.expect(";"))
            return node
        if v == "throw":
            return _Node(K.THROW_STATEMENT, [self.take(), self.expression(), self.expect(";")])
        if v == "try":
            return self.try_statement()
        if v == "synchronized" and self.val(1) == "(":
            return _Node(K.SYNCHRONIZED_STATEMENT, [self.take(), self.par_expression(), self.block()])
        if v == "assert":
            node = _Node(K.STATEMENT_OTHER, [self.take(), self.expression()])
            if self.at(":"):
                node.children += [self.take(), self.expression()]
            node.children.append(self.expect(";"))
            return node
        if self.is_ident() and self.val(1) == ":":
            return _Node(K.STATEMENT_OTHER, [self.take(), self.take(), self.statement()])
        if v in ("class", "interface", "enum") or v in _MODIFIERS or v == "@":
            mods = self.modifiers()
            if self.at("class", "interface", "enum"):
                return self.type_declaration(mods)
            return self.local_variable_rest(mods, self.parse_type())
        decl_type = self.speculate(self._decl_head)
        if decl_type is not None:
            return self.local_variable_rest([], decl_type)
        return _Node(K.STATEMENT_EXPRESSION, [self.expression(), self.expect(";")])

    def _decl_head(self) -> _Node:
        t = self.parse_type()
        if not (self.is_ident() and self.val(1) in ("=", ";", ",", "[", ":")):
            self.fail("not a declaration")
        return t

    def local_variable_rest(self, mods: list, vtype: _Node) -> _Node:
        node = _Node(K.LOCAL_VARIABLE_DECLARATION, mods + [vtype, self.declarator()])
        while self.at(","):
            node.children += [self.take(), self.declarator()]
        node.children.append(self.expect(";"))
        return node

    def for_statement(self) -> _Node:
        kw, lpar = self.take(), self.expect("(")
        enhanced = self.speculate(self._enhanced_head)
        if enhanced is not None:
            control = _Node(K.ENHANCED_FOR_CONTROL, [kw, lpar, enhanced, self.take(), self.expression(), self.expect(")")])
        else:
            control = _Node(K.FOR_CONTROL, [kw, lpar])
            if not self.at(";"):
                mods = self.modifiers()
                vtype = self.speculate(self._decl_head) if not mods else self.parse_type()
                if vtype is not None:
                    init = _Node(K.VARIABLE_DECLARATION, mods + [vtype, self.declarator()])
                    while self.at(","):
                        init.children += [self.take(), self.declarator()]
                    control.children.append(init)
                else:
                    control.children += self.expression_list()
            control.children.append(self.expect(";"))
            if not self.at(";"):
                control.children.append(self.expression())
            control.children.append(self.expect(";"))
            if not self.at(")"):
                control.children += self.expression_list()
            control.children.append(self.expect(")"))
        return _Node(K.FOR_STATEMENT, [control, self.statement()])

    def _enhanced_head(self) -> _Node:
        mods = self.modifiers()
        vtype = self.parse_type()
        name = self.ident()
        if not self.at(":"):
            self.fail("not an enhanced for")
        return _Node(K.VARIABLE_DECLARATION, mods + [vtype, _Node(K.VARIABLE_DECLARATOR, [name])])

    def expression_list(self) -> list:
        out = [self.expression()]
        while self.at(","):
            out += [self.take(), self.expression()]
        return out

    def switch_statement(self) -> _Node:
        node = _Node(K.SWITCH_STATEMENT, [self.take(), self.par_expression(), self.expect("{")])
        while not self.at("}"):
            if not self.at("case", "default"):
                self.fail("expected 'case' or 'default'")
            case = _Node(K.SWITCH_CASE)
            while self.at("case", "default"):
                if self.at("case"):
                    case.children += [self.take(), self.ternary()]
                else:
                    case.children.append(self.take())
                case.children.append(self.expect(":"))
            while not self.at("case", "default", "}"):
                if self.eof():
                    self.fail("unterminated switch")
                case.children.append(self.statement())
            node.children.append(case)
        node.children.append(self.take())
        return node

    def try_statement(self) -> _Node:
        node = _Node(K.TRY_STATEMENT, [self.take()])
        if self.at("("):
            node.children.append(self.take())
            while not self.at(")"):
                res = self.speculate(self._resource_decl)
                node.children.append(res if res is not None else _Node(K.TRY_RESOURCE, [self.expression()]))
                if self.at(";"):
                    node.children.append(self.take())
                elif not self.at(")"):
                    self.fail("expected ';' or ')' in resource list")
            node.children.append(self.take())
        node.children.append(self.block())
        while self.at("catch"):
            clause = _Node(K.CATCH_CLAUSE, [self.take(), self.expect("(")])
            param = _Node(K.CATCH_PARAMETER, self.modifiers() + [self.parse_type()])
            while self.at("|"):
                param.children += [self.take(), self.parse_type()]
            param.children.append(self.ident())
            clause.children += [param, self.expect(")"), self.block()]
            node.children.append(clause)
        if self.at("finally"):
            node.children += [self.take(), self.block()]
        if len(node.children) == 2 and node.children[1].kind is K.BLOCK_STATEMENT:
            self.fail("try without catch or finally")
        return node

    def _resource_decl(self) -> _Node:
        node = _Node(K.TRY_RESOURCE, self.modifiers() + [self.parse_type(), self.ident(), self.expect("=")])
        node.children.append(self.expression())
        return node

    # -- expressions ---------------------------------------------------
    def expression(self):
        lam = self.lambda_expression()
        if lam is not None:
            return lam
        lhs = self.ternary()
        if self.val() in _ASSIGN_OPS:
            return _Node(K.ASSIGNMENT, [lhs, self.take(), self.expression()])
        return lhs

    def lambda_expression(self):
        if self.is_ident() and self.val(1) == "->":
            params = [_Node(K.FORMAL_PARAMETER, [self.take()])]
        elif self.at("(") and self._closing_paren_followed_by_arrow():
            params = [self.take()]
            while not self.at(")"):
                if self.is_ident() and self.val(1) in (",", ")"):
                    params.append(_Node(K.FORMAL_PARAMETER, [self.take()]))
                else:
                    params.append(_Node(K.FORMAL_PARAMETER, self.modifiers() + [self.parse_type(), self.ident()]))
                if self.at(","):
                    params.append(self.take())
            params.append(self.take())
        else:
            return None
        node = _Node(K.LAMBDA_EXPRESSION, params + [self.expect("->")])
        node.children.append(self.block() if self.at("{") else self.expression())
        return node

    def _closing_paren_followed_by_arrow(self) -> bool:
        depth = 0
        j = self.i
        while j < len(self.toks):
            v = self.toks[j].value
            if v == "(":
                depth += 1
            elif v == ")":
                depth -= 1
                if depth == 0:
                    return j + 1 < len(self.toks) and self.toks[j + 1].value == "->"
            j += 1
        return False

    def ternary(self):
        cond = self.binary(1)
        if not self.at("?"):
            return cond
        node = _Node(K.TERNARY_EXPRESSION, [cond, self.take(), self.expression(), self.expect(":")])
        lam = self.lambda_expression()
        node.children.append(lam if lam is not None else self.ternary())
        return node

    def _binary_op(self) -> tuple[str, int] | None:
        t = self.peek()
        if t is None:
            return None
        if t.value == ">":
            # javalang splits shifts into adjacent '>' tokens
            n = 1
            while n < 3:
                nxt = self.peek(n)
                if nxt is None or nxt.value != ">" or nxt.line != t.line or nxt.column != t.column + n:
                    break
                n += 1
            if n > 1:
                return ">" * n, n
        if t.value in _BINARY_PREC and t.cls in ("Operator", "Keyword"):
            return t.value, 1
        return None

    def binary(self, min_prec: int):
        left = self.unary()
        while True:
            op = self._binary_op()
            if op is None or _BINARY_PREC[op[0]] < min_prec:
                return left
            value, width = op
            first = self.peek()
            self.i += width
            leaf = _Leaf(Tok(value, "Operator", first.line, first.column))
            if value == "instanceof":
                right = self.parse_type()
            else:
                right = self.binary(_BINARY_PREC[value] + 1)
            left = _Node(K.BINARY_OPERATION, [left, leaf, right])

    def unary(self):
        if self.val() in _PREFIX_OPS and self.peek().cls == "Operator":
            return _Node(K.UNARY_OPERATION, [self.take(), self.unary()])
        if self.at("("):
            cast = self.speculate(self._cast)
            if cast is not None:
                return cast
        node = self.selectors(self.primary())
        while self.at("++", "--"):
            node = _Node(K.UNARY_OPERATION, [node, self.take()])
        return node

    def _cast(self) -> _Node:
        lpar = self.take()
        ctype = self.parse_type()
        rpar = self.expect(")")
        nxt = self.peek()
        if nxt is None:
            self.fail("not a cast")
        primitive = ctype.kind is K.BASIC_TYPE
        if not primitive and not (nxt.cls in ("Identifier", "Literal") or nxt.value in _CAST_FOLLOW):
            self.fail("not a cast")
        lam = self.lambda_expression()
        return _Node(K.CAST, [lpar, ctype, rpar, lam if lam is not None else self.unary()])

    def primary(self):
        t = self.peek()
        if t is None:
            self.fail("expected expression")
        if t.cls == "Literal":
            return _Node(K.LITERAL, [self.take()])
        v = t.value
        if v == "this":
            leaf = self.take()
            if self.at("("):
                return _Node(K.METHOD_INVOCATION, [leaf, self.arguments()])
            return _Node(K.THIS, [leaf])
        if v == "super":
            leaf = self.take()
            if self.at("("):
                return _Node(K.METHOD_INVOCATION, [leaf, self.arguments()])
            return _Node(K.EXPRESSION_OTHER, [leaf])
        if v == "new":
            return self.creator()
        if v == "(":
            return self.par_expression()
        if t.cls == "Identifier":
            leaf = self.take()
            if self.at("("):
                return _Node(K.METHOD_INVOCATION, [leaf, self.arguments()])
            return _Node(K.MEMBER_REFERENCE, [leaf])
        if t.cls == "BasicType" or v == "void":
            node = _Node(K.EXPRESSION_OTHER, [self.parse_type() if v != "void" else self.take()])
            node.children += [self.expect("."), self.expect("class")]
            return node
        self.fail("expected expression")

    def selectors(self, node):
        while True:
            if self.at("."):
                dot = self.take()
                if self.at("<"):
                    targs = self.type_arguments()
                    name = self.ident()
                    node = _Node(K.METHOD_INVOCATION, [node, dot, targs, name, self.arguments()])
                elif self.is_ident():
                    name = self.take()
                    if self.at("("):
                        node = _Node(K.METHOD_INVOCATION, [node, dot, name, self.arguments()])
                    else:
                        node = _Node(K.MEMBER_REFERENCE, [node, dot, name])
                elif self.at("new"):
                    node = _Node(K.EXPRESSION_OTHER, [node, dot, self.creator()])
                elif self.at("class", "this", "super"):
                    node = _Node(K.EXPRESSION_OTHER, [node, dot, self.take()])
                else:
                    self.fail("expected member name")
            elif self.at("["):
                if self.val(1) == "]":
                    # array class literal such as String[].class
                    other = _Node(K.EXPRESSION_OTHER, [node])
                    while self.at("["):
                        other.children += [self.take(), self.expect("]")]
                    other.children += [self.expect("."), self.expect("class")]
                    node = other
                else:
                    node = _Node(K.ARRAY_SELECTOR, [node, self.take(), self.expression(), self.expect("]")])
            elif self.at("::"):
                node = _Node(K.EXPRESSION_OTHER, [node, self.take(), self.expect("new") if self.at("new") else self.ident()])
            else:
                return node

    def arguments(self) -> _Node:
        node = _Node(K.ARGUMENTS, [self.expect("(")])
        while not self.at(")"):
            node.children.append(self.expression())
            if self.at(","):
                node.children.append(self.take())
            elif not self.at(")"):
                self.fail("expected ',' or ')' in arguments")
        node.children.append(self.take())
        return node

    def creator(self) -> _Node:
        kw = self.expect("new")
        base = self.parse_type(dims=False)
        if self.at("["):
            node = _Node(K.ARRAY_CREATOR, [kw, base])
            while self.at("["):
                node.children.append(self.take())
                if not self.at("]"):
                    node.children.append(self.expression())
                node.children.append(self.expect("]"))
            if self.at("{"):
                node.children.append(self.array_initializer())
            return node
        node = _Node(K.CLASS_CREATOR, [kw, base, self.arguments()])
        if self.at("{"):
            self.class_body(node)
        return node


def _flatten(root, fragment_id: str) -> AstTree:
    nodes: list[AstNode] = []
    # iterative pre-order; ids are assigned on first visit
    stack = [(root, None)]
    while stack:
        item, parent = stack.pop()
        nid = len(nodes)
        if isinstance(item, _Leaf):
            t = item.tok
            nodes.append(AstNode(nid, K.TERMINAL, t.value, [], (t.line, t.column)))
        else:
            nodes.append(AstNode(nid, item.kind))
            for child in reversed(item.children):
                stack.append((child, nid))
        if parent is not None:
            nodes[parent].children.append(nid)
    return AstTree(fragment_id, nodes, 0)


_TYPE_KINDS = (K.CLASS_DECLARATION, K.INTERFACE_DECLARATION, K.ENUM_DECLARATION, K.DECLARATION_OTHER)


def parse_fragment(fragment: SourceFragment) -> AstTree:
    """Parse one method or class into a normalized ``AstTree``.

    Raises ``ParseError`` on invalid syntax and ``GranularityError`` when
    the single top-level declaration is not of the requested granularity.
    """
    toks = tokenize(fragment.code)
    if not toks:
        raise ParseError("empty fragment", 1, 1)
    gran = Granularity(fragment.granularity)
    parser = _Parser(toks)
    if gran is Granularity.METHOD:
        node = parser.member()
        if isinstance(node, _Node) and node.kind in _TYPE_KINDS:
            raise GranularityError(f"{fragment.id}: expected a method, found {node.kind.value}")
        if not isinstance(node, _Node) or node.kind not in (K.METHOD_DECLARATION, K.CONSTRUCTOR_DECLARATION):
            raise GranularityError(f"{fragment.id}: expected a method declaration")
        if not parser.eof():
            if _looks_like_member(toks[parser.i:]):
                raise GranularityError(f"{fragment.id}: more than one top-level declaration")
            parser.fail("unexpected trailing tokens")
        return _flatten(node, fragment.id)
    try:
        unit, n_types = parser.compilation_unit()
    except ParseError:
        if _parses_as_method(toks):
            raise GranularityError(f"{fragment.id}: expected a class, found a method") from None
        raise
    if n_types != 1:
        raise GranularityError(f"{fragment.id}: expected exactly one top-level type, found {n_types}")
    return _flatten(unit, fragment.id)


def _parses_as_method(toks: list[Tok]) -> bool:
    p = _Parser(toks)
    try:
        node = p.member()
    except ParseError:
        return False
    return isinstance(node, _Node) and node.kind in (K.METHOD_DECLARATION, K.CONSTRUCTOR_DECLARATION)


def _looks_like_member(toks: list[Tok]) -> bool:
    p = _Parser(toks)
    try:
        p.member()
    except ParseError:
        return False
    return True
