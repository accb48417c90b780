import numpy as np
import pytest

from signfit.hamnosys import (
    Block,
    Fusion,
    HamNoSysAst,
    HamToken,
    HandshapeBlock,
    Par,
    ParseError,
    Seq,
    Terminal,
    TokenKind,
    UNCLASSIFIABLE,
    classify_annotation,
    default_symbol_table,
    label_corpus,
    parse,
    parse_annotation,
    read_corpus_file,
    tokenize,
    tokenize_warnings,
)
from signfit.linguistic import SignClass

T = default_symbol_table()

# Short aliases for building annotation strings from the shipped table.
SYM = T.symbol(TokenKind.SYMMETRY)
HS1 = T.symbols_for(TokenKind.HANDSHAPE)[0]
HS2 = T.symbols_for(TokenKind.HANDSHAPE)[1]
HS3 = T.symbols_for(TokenKind.HANDSHAPE)[2]
MOD = T.symbol(TokenKind.HANDSHAPE_MODIFIER)
FINLOC = T.symbol(TokenKind.HANDSHAPE_FINGER_LOCATION)
LOC = T.symbol(TokenKind.LOCATION)
MOV = T.symbol(TokenKind.MOVEMENT)
PALM = T.symbol(TokenKind.PALM_ORIENTATION)
PARB = T.symbol(TokenKind.HAMPARBEGIN)
PARE = T.symbol(TokenKind.HAMPAREND)
SEQB = T.symbol(TokenKind.HAMSEQBEGIN)
SEQE = T.symbol(TokenKind.HAMSEQEND)
FUSB = T.symbol(TokenKind.HAMFUSIONBEGIN)
FUSE = T.symbol(TokenKind.HAMFUSIONEND)
PLUS = T.symbol(TokenKind.HAMPLUS)
REPL = T.symbol(TokenKind.HAMREPLACE)
REP = T.symbol(TokenKind.REPEAT)


class TestTokenizer:
    def test_empty(self):
        assert tokenize("") == []

    def test_symmetry_then_handshape(self):
        toks = tokenize(SYM + HS1)
        assert [t.kind for t in toks] == [TokenKind.SYMMETRY, TokenKind.HANDSHAPE]

    def test_unknown_codepoint_total(self):
        toks = tokenize("")
        assert len(toks) == 1
        assert toks[0].kind is TokenKind.OTHER_SYMBOL_NO_GROUP
        assert not toks[0].known
        assert tokenize_warnings(toks)

    def test_never_fails_on_arbitrary_unicode(self):
        for s in ("hello", "日本語", "\x00\x7f", "🙂🙃", SYM + "x" + HS1):
            tokenize(s)  # must not raise

    def test_positions(self):
        toks = tokenize(HS1 + LOC)
        assert [t.position for t in toks] == [0, 1]


class TestParser:
    def test_symmetry_flag_and_one_handshape_block(self):
        ast = parse_annotation(SYM + HS1 + LOC + MOV)
        assert ast.symmetry is not None
        hbs = [i for i in ast.block.items if isinstance(i, HandshapeBlock)]
        assert len(hbs) == 1

    def test_handshape_block_swallows_modifiers(self):
        ast = parse_annotation(HS1 + MOD + FINLOC + LOC)
        hb = ast.block.items[0]
        assert isinstance(hb, HandshapeBlock)
        assert [t.token.kind for t in hb.terminals] == [
            TokenKind.HANDSHAPE,
            TokenKind.HANDSHAPE_MODIFIER,
            TokenKind.HANDSHAPE_FINGER_LOCATION,
        ]

    def test_par_with_plus(self):
        ast = parse_annotation(PARB + HS1 + PLUS + HS2 + PARE)
        par = ast.block.items[0]
        assert isinstance(par, Par)
        assert len(par.blocks) == 2
        assert isinstance(par.blocks[0].items[0], HandshapeBlock)
        assert isinstance(par.blocks[1].items[0], HandshapeBlock)

    def test_seq_and_fusion(self):
        ast = parse_annotation(SEQB + HS1 + SEQE + FUSB + LOC + FUSE)
        assert isinstance(ast.block.items[0], Seq)
        assert isinstance(ast.block.items[1], Fusion)

    def test_unmatched_par_reports_position(self):
        toks = tokenize(PARB + HS1)
        with pytest.raises(ParseError, match="HAMPAREND"):
            parse(toks)

    def test_modifier_outside_handshape_block(self):
        with pytest.raises(ParseError, match="outside a handshape_block"):
            parse_annotation(LOC + MOD)

    def test_stray_close_bracket(self):
        with pytest.raises(ParseError, match="HAMPAREND"):
            parse_annotation(HS1 + PARE)

    def test_symmetry_mid_stream_rejected(self):
        with pytest.raises(ParseError):
            parse_annotation(HS1 + SYM)

    def test_round_trip_fixed_cases(self):
        for text in (
            HS1,
            SYM + HS1 + LOC,
            PARB + HS1 + PLUS + HS2 + PARE,
            SEQB + HS1 + MOD + SEQE,
            HS1 + REPL + HS2,
            FUSB + PARB + LOC + PARE + FUSE,
        ):
            ast = parse_annotation(text)
            again = parse([HamToken(t.kind, t.codepoint, i) for i, t in enumerate(ast.to_tokens())])
            assert again == ast
            assert ast.to_text() == text


def random_block(rng, table, depth, max_items=4):
    items = []
    for _ in range(rng.integers(0, max_items + 1)):
        kind = rng.integers(0, 6 if depth > 0 else 3)
        if kind == 0:
            text = rng.choice(table.symbols_for(TokenKind.HANDSHAPE))
            for _ in range(rng.integers(0, 3)):
                tail = rng.choice(
                    [TokenKind.HANDSHAPE_MODIFIER, TokenKind.HANDSHAPE_FINGER_LOCATION]
                )
                text += rng.choice(table.symbols_for(tail))
            items.append(text)
        elif kind == 1:
            free = rng.choice(
                [
                    TokenKind.EXTENDED_FINGER_LOCATION,
                    TokenKind.PALM_ORIENTATION,
                    TokenKind.MOVEMENT,
                    TokenKind.MOVEMENT_MODIFIER,
                    TokenKind.LOCATION,
                    TokenKind.LOCATION_MODIFIER,
                    TokenKind.OTHER_SYMBOL_NO_GROUP,
                    TokenKind.HAMREPLACE,
                    TokenKind.REPEAT,
                ]
            )
            items.append(rng.choice(table.symbols_for(free)))
        elif kind == 2:
            items.append("")
        elif kind == 3:
            inner = random_block(rng, table, depth - 1, 2)
            if rng.random() < 0.5:
                inner2 = random_block(rng, table, depth - 1, 2)
                items.append(PARB + inner + PLUS + inner2 + PARE)
            else:
                items.append(PARB + inner + PARE)
        elif kind == 4:
            items.append(SEQB + random_block(rng, table, depth - 1, 2) + SEQE)
        else:
            items.append(FUSB + random_block(rng, table, depth - 1, 2) + FUSE)
    return "".join(items)


class TestParserRoundTripRandom:
    def test_1k_grammar_conformant_streams(self):
        rng = np.random.default_rng(42)
        for i in range(1000):
            text = random_block(rng, T, depth=2)
            if rng.random() < 0.3:
                text = SYM + text
            ast = parse_annotation(text)
            rendered = ast.to_tokens()
            again = parse([HamToken(t.kind, t.codepoint, i) for i, t in enumerate(rendered)])
            assert again == ast


# -- golden corpus: >=3 positive and >=3 negative cases per class rule ------------


def golden_cases():
    """(annotation, expected class or UNCLASSIFIABLE, note) triples."""
    cases = []

    # class 0a: one handshape block, no SYMMETRY
    cases += [
        (HS1, SignClass.C0A, "bare handshape"),
        (HS1 + MOD + LOC + MOV, SignClass.C0A, "handshape with modifier and movement"),
        (SEQB + HS2 + SEQE + PALM, SignClass.C0A, "handshape nested in seq"),
    ]
    # class 1a: one handshape block, SYMMETRY present
    cases += [
        (SYM + HS1, SignClass.C1A, "symmetry + one handshape"),
        (SYM + HS2 + FINLOC + LOC, SignClass.C1A, "symmetry + modified handshape"),
        (SYM + FUSB + HS3 + FUSE + MOV, SignClass.C1A, "symmetry + fused handshape"),
    ]
    # class 2a: two equal handshape blocks inside one par, no SYMMETRY
    cases += [
        (PARB + HS1 + PLUS + HS1 + PARE, SignClass.C2A, "two equal in par"),
        (PARB + HS2 + MOD + PLUS + HS2 + MOD + PARE + MOV, SignClass.C2A, "equal with modifiers"),
        (LOC + PARB + HS3 + PLUS + HS3 + PARE, SignClass.C2A, "par after location"),
    ]
    # class 3a: two unequal handshape blocks inside one par, no SYMMETRY
    cases += [
        (PARB + HS1 + PLUS + HS2 + PARE, SignClass.C3A, "two unequal in par"),
        (PARB + HS1 + MOD + PLUS + HS1 + PARE, SignClass.C3A, "modifier makes them differ"),
        (PARB + HS2 + PLUS + HS3 + PARE + MOV, SignClass.C3A, "unequal par with movement"),
    ]
    # class 0b: two unequal handshape blocks, HAMREPLACE, no SYMMETRY/REPEAT
    cases += [
        (HS1 + REPL + HS2, SignClass.C0B, "replace transition"),
        (HS2 + MOD + REPL + HS2, SignClass.C0B, "modifier difference with replace"),
        (LOC + HS1 + REPL + HS3 + MOV, SignClass.C0B, "replace amid other symbols"),
    ]
    # class 1b: like 0b but with SYMMETRY (resolution of the 0b/1b collision)
    cases += [
        (SYM + HS1 + REPL + HS2, SignClass.C1B, "symmetric replace transition"),
        (SYM + HS2 + REPL + HS3 + MOV, SignClass.C1B, "symmetric replace with movement"),
        (SYM + HS1 + MOD + REPL + HS1, SignClass.C1B, "symmetric modifier difference"),
    ]
    # class 2b: three handshape blocks, first two equal, HAMREPLACE, no SYM/REPEAT
    cases += [
        (HS1 + HS1 + REPL + HS2, SignClass.C2B, "pair then replace"),
        (HS2 + HS2 + REPL + HS3 + LOC, SignClass.C2B, "pair then replace with location"),
        (HS3 + MOD + HS3 + MOD + REPL + HS1, SignClass.C2B, "modified pair then replace"),
    ]
    # class 3b: three handshape blocks, first two unequal, HAMREPLACE, no SYM/REPEAT
    cases += [
        (HS1 + HS2 + REPL + HS3, SignClass.C3B, "unequal pair then replace"),
        (HS2 + HS1 + REPL + HS1 + MOV, SignClass.C3B, "unequal pair, replace to first"),
        (HS3 + HS1 + MOD + REPL + HS2, SignClass.C3B, "modifier difference pair"),
    ]

    # negatives: near misses for each rule
    cases += [
        # 0a negatives (one-handshape rules need exactly one block)
        (LOC + MOV, UNCLASSIFIABLE, "no handshape at all"),
        (HS1 + HS2, UNCLASSIFIABLE, "two blocks, no par/replace"),
        (SYM + HS1 + "" , SignClass.C1A, "symmetry flips 0a to 1a"),
        # 2a/3a negatives: par containment required
        (HS1 + HS1, UNCLASSIFIABLE, "equal pair outside par"),
        (PARB + HS1 + PARE + HS1, UNCLASSIFIABLE, "second block outside the par"),
        (SYM + PARB + HS1 + PLUS + HS1 + PARE, UNCLASSIFIABLE, "symmetry blocks 2a"),
        # 0b/1b negatives
        (HS1 + REPL + HS1, UNCLASSIFIABLE, "equal blocks with replace"),
        (HS1 + HS2, UNCLASSIFIABLE, "unequal pair but no replace"),
        (HS1 + REPL + HS2 + REP, UNCLASSIFIABLE, "REPEAT excludes 0b"),
        (SYM + HS1 + REPL + HS2 + REP, UNCLASSIFIABLE, "REPEAT excludes 1b"),
        # 2b/3b negatives
        (HS1 + HS1 + HS2, UNCLASSIFIABLE, "three blocks without replace"),
        (HS1 + HS1 + REPL + HS2 + REP, UNCLASSIFIABLE, "REPEAT excludes 2b"),
        (SYM + HS1 + HS2 + REPL + HS3, UNCLASSIFIABLE, "SYMMETRY excludes 3b"),
        (HS1 + HS2 + REPL + HS3 + REP, UNCLASSIFIABLE, "REPEAT excludes 3b"),
    ]
    return cases


class TestClassification:
    @pytest.mark.parametrize("text,expected,note", golden_cases())
    def test_golden_corpus(self, text, expected, note):
        ast = parse_annotation(text)
        got, evidence = classify_annotation(ast)
        assert got == expected, f"{note}: expected {expected}, got {got} ({evidence})"

    def test_deterministic(self):
        ast = parse_annotation(PARB + HS1 + PLUS + HS2 + PARE)
        assert classify_annotation(ast) == classify_annotation(ast)

    def test_kind_only_equality_option(self):
        # same kinds, different codepoints: unequal strictly, equal kind-only
        ast = parse_annotation(PARB + HS1 + PLUS + HS2 + PARE)
        strict, _ = classify_annotation(ast)
        loose, _ = classify_annotation(ast, kind_only_equality=True)
        assert strict is SignClass.C3A
        assert loose is SignClass.C2A


class TestLabelCorpus:
    def test_counts(self):
        records = [
            ("GLOSS_A", HS1),
            ("GLOSS_B", SYM + HS1),
            ("GLOSS_C", PARB + HS1 + PLUS + HS1 + PARE),
        ]
        results, counts = label_corpus(records)
        assert counts["0a"] == 1
        assert counts["1a"] == 1
        assert counts["2a"] == 1

    def test_bad_record_isolated(self):
        records = [("BAD", PARB + HS1), ("GOOD", HS1)]
        results, counts = label_corpus(records)
        assert results[0].sign_class == UNCLASSIFIABLE
        assert results[0].diagnostics
        assert results[1].sign_class is SignClass.C0A
        assert counts[UNCLASSIFIABLE] == 1

    def test_empty_corpus(self):
        results, counts = label_corpus([])
        assert results == []
        assert all(v == 0 for v in counts.values())

    def test_corpus_file(self, tmp_path):
        path = tmp_path / "corpus.tsv"
        path.write_text(f"# comment\nGLOSS_A\t{HS1}\nGLOSS_B\t{SYM + HS1}\n", encoding="utf-8")
        records = read_corpus_file(path)
        assert len(records) == 2
        results, counts = label_corpus(records)
        assert counts["0a"] == 1 and counts["1a"] == 1

    def test_corpus_file_bad_columns(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("only_one_column\n", encoding="utf-8")
        with pytest.raises(ValueError, match="two tab-separated columns"):
            read_corpus_file(path)
