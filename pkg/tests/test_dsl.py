import random

import numpy as np
import pytest

from sceneforge import dsl, synth
from sceneforge.dsl import Assign, BinOp, Call, ListLit, Number, TupleLit, Var
from sceneforge.errors import ParseError


class TestParse:
    def test_smallest_program(self):
        p = dsl.parse("bed_1 = furniture(0.0, 0.0, 2.0, 1.6)")
        assert p == dsl.Program(
            (Assign("bed_1", Call("furniture", (Number(0.0), Number(0.0), Number(2.0), Number(1.6)))),)
        )

    def test_nested_structures(self):
        p = dsl.parse("t_1 = furniture(0,0,1,1)\nc = cluster_placement(t_1, [(-0.6,0.0)], (0.5,0.5))")
        assert len(p.statements) == 2
        call = p.statements[1].value
        assert call == Call(
            "cluster_placement",
            (
                Var("t_1"),
                ListLit((TupleLit((Number(-0.6), Number(0.0))),)),
                TupleLit((Number(0.5), Number(0.5))),
            ),
        )

    def test_arity_not_checked_at_parse(self):
        p = dsl.parse("bed_1 = furniture(0,0,1)")
        assert len(p.statements[0].value.args) == 3

    def test_comments_and_blank_lines(self):
        p = dsl.parse("# a comment\n\nbed_1 = furniture(0,0,1,1)  # trailing\n")
        assert len(p.statements) == 1

    def test_def_with_loop(self):
        src = (
            "def row_of(obj_ref, count, distance) {\n"
            "  out = [obj_ref]\n"
            "  for i in 1..count {\n"
            "    out = out + [parallel(obj_ref, distance * i, 4)]\n"
            "  }\n"
            "  return out\n"
            "}\n"
        )
        p = dsl.parse(src)
        assert len(p.defs) == 1
        assert p.defs[0].params == ("obj_ref", "count", "distance")

    def test_arithmetic_precedence(self):
        p = dsl.parse("x = 1 + 2 * 3 - 4 / 2")
        v = p.statements[0].value
        assert isinstance(v, BinOp) and v.op == "-"


class TestParseErrors:
    @pytest.mark.parametrize(
        "src",
        [
            "bed_1 = furniture(0,",
            "x = y",
            "bed_1 = 1\nbed_1 = 2",
            "x = -",
            "x = (1,",
            "def f(a) { return a }\nreturn [1]",
            "def f(a) { x = 1 }",  # missing return
            "def f(a) { g_1 = f(a)\nreturn [g_1] }",  # recursion
            "def f(a, a) { return [a] }",  # dup params
            "Bed = furniture(0,0,1,1)",  # invalid name
            "for i in 0..2 { x = 1 }",  # loop outside def
        ],
    )
    def test_raises_with_position(self, src):
        with pytest.raises(ParseError) as err:
            dsl.parse(src)
        assert err.value.line >= 1 and err.value.col >= 1

    def test_fuzz_never_aborts(self):
        rnd = random.Random(1234)
        for _ in range(500):
            blob = bytes(rnd.randrange(256) for _ in range(rnd.randrange(0, 80)))
            try:
                dsl.parse(blob)
            except ParseError:
                pass

    def test_deep_nesting_bounded(self):
        with pytest.raises(ParseError):
            dsl.parse("x = " + "(" * 500 + "1" + ")" * 500)


class TestFormat:
    def test_roundtrip_smallest(self):
        text = "bed_1 = furniture(0.0, 0.0, 2.0, 1.6)\n"
        assert dsl.format_program(dsl.parse(text)) == text

    def test_floats_keep_decimal(self):
        assert dsl.format_program(dsl.parse("x = 2.0")) == "x = 2.0\n"
        assert dsl.format_program(dsl.parse("x = 2")) == "x = 2.0\n"
        assert "0.5" in dsl.format_program(dsl.parse("x = 0.50"))

    def test_brackets_preserved(self):
        text = "c = cluster_placement(furniture(0.0, 0.0, 1.0, 1.0), [(1.0, 2.0), (3.0, 4.0)], (0.5, 0.5))\n"
        assert dsl.format_program(dsl.parse(text)) == text

    def test_parse_format_parse_idempotent_random_corpus(self):
        rng = np.random.default_rng(5)
        for _ in range(60):
            program, _ = synth.random_pattern_program(rng)
            once = dsl.format_program(program)
            again = dsl.format_program(dsl.parse(once))
            assert once == again
            assert dsl.parse(once) == dsl.parse(again)

    def test_format_def_roundtrip(self):
        src = (
            "def f_0(a_0, a_1) {\n"
            "    b_1 = furniture(a_0, a_1, a_0 + 1.0, a_1 + 1.0)\n"
            "    return [b_1]\n"
            "}\n"
        )
        assert dsl.format_program(dsl.parse(src)) == src

    def test_precedence_parenthesized(self):
        p = dsl.Program((Assign("x", BinOp("*", BinOp("+", Number(1.0), Number(2.0)), Number(3.0))),))
        text = dsl.format_program(p)
        assert text == "x = (1.0 + 2.0) * 3.0\n"
        assert dsl.parse(text) == p


class TestCategories:
    @pytest.mark.parametrize(
        "name,cat",
        [("chair_12", "chair"), ("coffee_table_1", "coffee_table"), ("chair", "chair"), ("t_1", "t")],
    )
    def test_category_of(self, name, cat):
        assert dsl.category_of(name) == cat


class TestTokens:
    def test_documented_count(self):
        # closing delimiters are free; everything else counts
        assert dsl.count_tokens("b_1 = furniture(0,0,1,1)") == 11

    def test_empty(self):
        assert dsl.count_tokens("") == 0

    def test_additivity(self):
        a, b = "b_1 = furniture(0,0,1,1)", "c_1 = parallel(b_1, 2, 4)"
        assert dsl.count_tokens(a + "\n" + b) == dsl.count_tokens(a) + dsl.count_tokens(b)
