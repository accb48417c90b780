"""HamNoSys annotation tokenizer, recursive-descent parser, and sign-class
assignment rules.

The grammar over token kinds:

    hns                 = [SYMMETRY] block
    block               = (handshape_block | non_handshape_block)*
    handshape_block     = HANDSHAPE (HANDSHAPE_MODIFIER | HANDSHAPE_FINGER_LOCATION)*
    non_handshape_block = par | seq | fusion | EXTENDED_FINGER_LOCATION
                        | PALM_ORIENTATION | MOVEMENT | MOVEMENT_MODIFIER
                        | LOCATION | LOCATION_MODIFIER | OTHER_SYMBOL_NO_GROUP
                        | HAMREPLACE | REPEAT
    par                 = HAMPARBEGIN block [HAMPLUS block] HAMPAREND
    seq                 = HAMSEQBEGIN block HAMSEQEND
    fusion              = HAMFUSIONBEGIN block HAMFUSIONEND

HAMREPLACE and REPEAT are admitted as free terminals inside a block; the
class-assignment rules test for their presence, so they must be parseable.

The codepoint -> token-kind mapping ships as an editable data file
(data/hamnosys_symbols.json) covering a private-use-area symbol set.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

from .linguistic import SignClass


class TokenKind(enum.Enum):
    SYMMETRY = "SYMMETRY"
    HANDSHAPE = "HANDSHAPE"
    HANDSHAPE_MODIFIER = "HANDSHAPE_MODIFIER"
    HANDSHAPE_FINGER_LOCATION = "HANDSHAPE_FINGER_LOCATION"
    EXTENDED_FINGER_LOCATION = "EXTENDED_FINGER_LOCATION"
    PALM_ORIENTATION = "PALM_ORIENTATION"
    MOVEMENT = "MOVEMENT"
    MOVEMENT_MODIFIER = "MOVEMENT_MODIFIER"
    LOCATION = "LOCATION"
    LOCATION_MODIFIER = "LOCATION_MODIFIER"
    OTHER_SYMBOL_NO_GROUP = "OTHER_SYMBOL_NO_GROUP"
    HAMPARBEGIN = "HAMPARBEGIN"
    HAMPAREND = "HAMPAREND"
    HAMSEQBEGIN = "HAMSEQBEGIN"
    HAMSEQEND = "HAMSEQEND"
    HAMFUSIONBEGIN = "HAMFUSIONBEGIN"
    HAMFUSIONEND = "HAMFUSIONEND"
    HAMPLUS = "HAMPLUS"
    HAMREPLACE = "HAMREPLACE"
    REPEAT = "REPEAT"


# Terminal kinds that stand alone inside a block.
_FREE_TERMINALS = frozenset(
    {
        TokenKind.EXTENDED_FINGER_LOCATION,
        TokenKind.PALM_ORIENTATION,
        TokenKind.MOVEMENT,
        TokenKind.MOVEMENT_MODIFIER,
        TokenKind.LOCATION,
        TokenKind.LOCATION_MODIFIER,
        TokenKind.OTHER_SYMBOL_NO_GROUP,
        TokenKind.HAMREPLACE,
        TokenKind.REPEAT,
    }
)

_HANDSHAPE_TAIL = frozenset({TokenKind.HANDSHAPE_MODIFIER, TokenKind.HANDSHAPE_FINGER_LOCATION})


@dataclass(frozen=True)
class HamToken:
    kind: TokenKind
    codepoint: str
    position: int = field(compare=False, default=-1)
    known: bool = field(compare=False, default=True)

    def __repr__(self):
        return f"{self.kind.value}(U+{ord(self.codepoint):04X}@{self.position})"


class SymbolTable:
    """Codepoint -> (kind, name) mapping, loaded from the shipped data file."""

    def __init__(self, entries: dict):
        self.entries = dict(entries)
        self._by_kind: dict = {}
        for ch, (kind, _name) in self.entries.items():
            self._by_kind.setdefault(kind, []).append(ch)
        for chars in self._by_kind.values():
            chars.sort()

    @classmethod
    def from_json(cls, raw: dict) -> "SymbolTable":
        entries = {}
        for item in raw["symbols"]:
            ch = chr(int(item["codepoint"], 16))
            entries[ch] = (TokenKind(item["kind"]), item["name"])
        return cls(entries)

    @classmethod
    def load(cls, path=None) -> "SymbolTable":
        if path is None:
            ref = resources.files("signfit").joinpath("data/hamnosys_symbols.json")
            with ref.open("r", encoding="utf-8") as fh:
                return cls.from_json(json.load(fh))
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def kind_of(self, ch: str) -> Optional[TokenKind]:
        entry = self.entries.get(ch)
        return entry[0] if entry else None

    def symbols_for(self, kind: TokenKind) -> list:
        """All codepoints of a kind, sorted (first entry is the canonical one)."""
        return list(self._by_kind.get(kind, []))

    def symbol(self, kind: TokenKind) -> str:
        chars = self.symbols_for(kind)
        if not chars:
            raise KeyError(f"symbol table defines no codepoint of kind {kind.value}")
        return chars[0]


_default_table: Optional[SymbolTable] = None


def default_symbol_table() -> SymbolTable:
    global _default_table
    if _default_table is None:
        _default_table = SymbolTable.load()
    return _default_table


def tokenize(annotation: str, table: Optional[SymbolTable] = None):
    """Map every codepoint to a token. Total: unknown codepoints become
    OTHER_SYMBOL_NO_GROUP tokens flagged ``known=False``; whitespace is skipped.
    """
    table = table or default_symbol_table()
    tokens = []
    for i, ch in enumerate(annotation):
        if ch.isspace():
            continue
        kind = table.kind_of(ch)
        if kind is None:
            tokens.append(HamToken(TokenKind.OTHER_SYMBOL_NO_GROUP, ch, i, known=False))
        else:
            tokens.append(HamToken(kind, ch, i))
    return tokens


def tokenize_warnings(tokens: Sequence[HamToken]):
    return [
        f"unknown symbol U+{ord(t.codepoint):04X} at position {t.position}"
        for t in tokens
        if not t.known
    ]


# -- AST ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Terminal:
    token: HamToken

    def to_tokens(self):
        return [self.token]


@dataclass(frozen=True)
class HandshapeBlock:
    """A HANDSHAPE terminal plus its modifier/finger-location tail."""

    terminals: tuple  # of Terminal

    def to_tokens(self):
        return [t.token for t in self.terminals]

    def signature(self, kind_only: bool = False):
        """Comparable content: (kind, codepoint) pairs, or kinds only."""
        if kind_only:
            return tuple(t.token.kind for t in self.terminals)
        return tuple((t.token.kind, t.token.codepoint) for t in self.terminals)


@dataclass(frozen=True)
class Par:
    blocks: tuple  # one or two Block nodes
    begin: HamToken
    end: HamToken
    plus: Optional[HamToken] = None

    def to_tokens(self):
        out = [self.begin] + self.blocks[0].to_tokens()
        if len(self.blocks) > 1:
            out.append(self.plus)
            out.extend(self.blocks[1].to_tokens())
        out.append(self.end)
        return out


@dataclass(frozen=True)
class Seq:
    block: "Block"
    begin: HamToken
    end: HamToken

    def to_tokens(self):
        return [self.begin] + self.block.to_tokens() + [self.end]


@dataclass(frozen=True)
class Fusion:
    block: "Block"
    begin: HamToken
    end: HamToken

    def to_tokens(self):
        return [self.begin] + self.block.to_tokens() + [self.end]


@dataclass(frozen=True)
class Block:
    items: tuple  # HandshapeBlock | Par | Seq | Fusion | Terminal

    def to_tokens(self):
        out = []
        for item in self.items:
            out.extend(item.to_tokens())
        return out


@dataclass(frozen=True)
class HamNoSysAst:
    symmetry: Optional[HamToken]
    block: Block

    def to_tokens(self):
        head = [self.symmetry] if self.symmetry is not None else []
        return head + self.block.to_tokens()

    def to_text(self) -> str:
        return "".join(t.codepoint for t in self.to_tokens())


class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at token position {position})")
        self.position = position


class _Parser:
    def __init__(self, tokens: Sequence[HamToken]):
        self.tokens = list(tokens)
        self.pos = 0

    def peek(self) -> Optional[HamToken]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> HamToken:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: TokenKind) -> HamToken:
        tok = self.peek()
        if tok is None:
            raise ParseError(f"unexpected end of input, expected {kind.value}", self.pos)
        if tok.kind is not kind:
            raise ParseError(f"expected {kind.value}, found {tok.kind.value}", self.pos)
        return self.take()

    def parse_hns(self) -> HamNoSysAst:
        symmetry = None
        tok = self.peek()
        if tok is not None and tok.kind is TokenKind.SYMMETRY:
            symmetry = self.take()
        block = self.parse_block()
        if self.pos < len(self.tokens):
            stray = self.tokens[self.pos]
            raise ParseError(f"unexpected {stray.kind.value} after end of annotation", self.pos)
        return HamNoSysAst(symmetry, block)

    def parse_block(self) -> Block:
        items = []
        while True:
            tok = self.peek()
            if tok is None:
                break
            if tok.kind is TokenKind.HANDSHAPE:
                items.append(self.parse_handshape_block())
            elif tok.kind is TokenKind.HAMPARBEGIN:
                items.append(self.parse_par())
            elif tok.kind is TokenKind.HAMSEQBEGIN:
                items.append(self.parse_seq())
            elif tok.kind is TokenKind.HAMFUSIONBEGIN:
                items.append(self.parse_fusion())
            elif tok.kind in _FREE_TERMINALS:
                items.append(Terminal(self.take()))
            elif tok.kind in _HANDSHAPE_TAIL:
                raise ParseError(
                    f"{tok.kind.value} outside a handshape_block", self.pos
                )
            else:
                break
        return Block(tuple(items))

    def parse_handshape_block(self) -> HandshapeBlock:
        terminals = [Terminal(self.expect(TokenKind.HANDSHAPE))]
        while True:
            tok = self.peek()
            if tok is not None and tok.kind in _HANDSHAPE_TAIL:
                terminals.append(Terminal(self.take()))
            else:
                break
        return HandshapeBlock(tuple(terminals))

    def parse_par(self) -> Par:
        begin = self.expect(TokenKind.HAMPARBEGIN)
        blocks = [self.parse_block()]
        plus = None
        tok = self.peek()
        if tok is not None and tok.kind is TokenKind.HAMPLUS:
            plus = self.take()
            blocks.append(self.parse_block())
        end = self.expect(TokenKind.HAMPAREND)
        return Par(tuple(blocks), begin, end, plus)

    def parse_seq(self) -> Seq:
        begin = self.expect(TokenKind.HAMSEQBEGIN)
        block = self.parse_block()
        end = self.expect(TokenKind.HAMSEQEND)
        return Seq(block, begin, end)

    def parse_fusion(self) -> Fusion:
        begin = self.expect(TokenKind.HAMFUSIONBEGIN)
        block = self.parse_block()
        end = self.expect(TokenKind.HAMFUSIONEND)
        return Fusion(block, begin, end)


def parse(tokens: Sequence[HamToken]) -> HamNoSysAst:
    return _Parser(tokens).parse_hns()


def parse_annotation(annotation: str, table: Optional[SymbolTable] = None) -> HamNoSysAst:
    return parse(tokenize(annotation, table))


# -- class assignment ------------------------------------------------------------


def _walk(node, out_terminals, out_handshapes, par_stack, hb_pars):
    if isinstance(node, HamNoSysAst):
        if node.symmetry is not None:
            out_terminals.append(node.symmetry)
        _walk(node.block, out_terminals, out_handshapes, par_stack, hb_pars)
    elif isinstance(node, Block):
        for item in node.items:
            _walk(item, out_terminals, out_handshapes, par_stack, hb_pars)
    elif isinstance(node, HandshapeBlock):
        out_handshapes.append(node)
        hb_pars.append(tuple(par_stack))
        out_terminals.extend(t.token for t in node.terminals)
    elif isinstance(node, Par):
        out_terminals.append(node.begin)
        par_stack.append(node)
        for i, blk in enumerate(node.blocks):
            if i == 1:
                out_terminals.append(node.plus)
            _walk(blk, out_terminals, out_handshapes, par_stack, hb_pars)
        par_stack.pop()
        out_terminals.append(node.end)
    elif isinstance(node, (Seq, Fusion)):
        out_terminals.append(node.begin)
        _walk(node.block, out_terminals, out_handshapes, par_stack, hb_pars)
        out_terminals.append(node.end)
    elif isinstance(node, Terminal):
        out_terminals.append(node.token)
    else:  # pragma: no cover
        raise TypeError(f"unknown AST node {type(node)!r}")


def _analyze(ast: HamNoSysAst):
    terminals, handshapes, hb_pars = [], [], []
    _walk(ast, terminals, handshapes, [], hb_pars)
    kinds = {t.kind for t in terminals}
    return {
        "handshapes": handshapes,
        "hb_pars": hb_pars,  # enclosing Par nodes per handshape block
        "symmetry": TokenKind.SYMMETRY in kinds,
        "replace": TokenKind.HAMREPLACE in kinds,
        "repeat": TokenKind.REPEAT in kinds,
    }


def _first_two_share_par(info) -> bool:
    if len(info["handshapes"]) < 2:
        return False
    pars0 = set(id(p) for p in info["hb_pars"][0])
    pars1 = set(id(p) for p in info["hb_pars"][1])
    return bool(pars0 & pars1)


UNCLASSIFIABLE = "unclassifiable"


def classify_annotation(ast: HamNoSysAst, kind_only_equality: bool = False):
    """Assign one of the eight sign classes from the parse tree.

    Rules are tried in the fixed order 1a, 0a, 2a, 3a, 0b, 1b, 2b, 3b; the
    first match wins and ``UNCLASSIFIABLE`` is returned if none fires.
    Returns (sign_class_or_unclassifiable, evidence string).
    """
    info = _analyze(ast)
    hb = info["handshapes"]
    n = len(hb)
    sym, rep, repeat = info["symmetry"], info["replace"], info["repeat"]

    def eq(a, b):
        return a.signature(kind_only_equality) == b.signature(kind_only_equality)

    if n == 1 and sym:
        return SignClass.C1A, "one handshape block with a SYMMETRY terminal"
    if n == 1 and not sym:
        return SignClass.C0A, "one handshape block, no SYMMETRY terminal"
    if n == 2 and eq(hb[0], hb[1]) and _first_two_share_par(info) and not sym:
        return SignClass.C2A, "two equal handshape blocks inside one par, no SYMMETRY"
    if n == 2 and not eq(hb[0], hb[1]) and _first_two_share_par(info) and not sym:
        return SignClass.C3A, "two unequal handshape blocks inside one par, no SYMMETRY"
    if n == 2 and not eq(hb[0], hb[1]) and rep and not sym and not repeat:
        return SignClass.C0B, "two unequal handshape blocks with HAMREPLACE, no SYMMETRY/REPEAT"
    if n == 2 and not eq(hb[0], hb[1]) and rep and sym and not repeat:
        return SignClass.C1B, "two unequal handshape blocks with HAMREPLACE and SYMMETRY, no REPEAT"
    if n == 3 and eq(hb[0], hb[1]) and rep and not sym and not repeat:
        return SignClass.C2B, "three handshape blocks, first two equal, HAMREPLACE, no SYMMETRY/REPEAT"
    if n == 3 and not eq(hb[0], hb[1]) and rep and not sym and not repeat:
        return SignClass.C3B, "three handshape blocks, first two unequal, HAMREPLACE, no SYMMETRY/REPEAT"
    return UNCLASSIFIABLE, f"no rule matched ({n} handshape blocks)"


@dataclass(frozen=True)
class ClassifiedAnnotation:
    gloss: str
    ast: Optional[HamNoSysAst]
    sign_class: object  # SignClass or UNCLASSIFIABLE
    evidence: str
    diagnostics: tuple = ()


def label_corpus(records, table: Optional[SymbolTable] = None):
    """Classify (gloss, annotation) pairs; one bad record never aborts the rest.

    Returns (list of ClassifiedAnnotation, counts dict keyed by class value).
    """
    table = table or default_symbol_table()
    results = []
    counts = {c.value: 0 for c in SignClass}
    counts[UNCLASSIFIABLE] = 0
    for gloss, annotation in records:
        tokens = tokenize(annotation, table)
        diagnostics = list(tokenize_warnings(tokens))
        try:
            ast = parse(tokens)
        except ParseError as exc:
            results.append(
                ClassifiedAnnotation(gloss, None, UNCLASSIFIABLE, "parse error", tuple(diagnostics + [str(exc)]))
            )
            counts[UNCLASSIFIABLE] += 1
            continue
        sign_class, evidence = classify_annotation(ast)
        results.append(ClassifiedAnnotation(gloss, ast, sign_class, evidence, tuple(diagnostics)))
        key = sign_class.value if isinstance(sign_class, SignClass) else UNCLASSIFIABLE
        counts[key] += 1
    return results, counts


def read_corpus_file(path):
    """Read a two-column (gloss, annotation) tab-separated corpus file."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(
                    f"{path}:{line_no}: expected two tab-separated columns, got {len(parts)}"
                )
            records.append((parts[0], parts[1]))
    return records
