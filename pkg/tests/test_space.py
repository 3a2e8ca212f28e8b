import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epnas import space
from epnas.space import (
    CELL_MINUS_1,
    CELL_MINUS_2,
    Block,
    InvalidArchitecture,
    MacroLayer,
    Op,
    Space,
)

from . import oracles


def macro(layers):
    return space.macro_descriptor(layers)


def micro(blocks):
    return space.micro_descriptor(blocks)


@st.composite
def macro_archs(draw, max_depth=6):
    depth = draw(st.integers(1, max_depth))
    layers = []
    for idx in range(1, depth + 1):
        op = Op(draw(st.integers(0, 5)))
        skips = tuple(j for j in range(1, idx) if draw(st.booleans()))
        layers.append(MacroLayer(op, skips))
    return macro(layers)


@st.composite
def micro_cells(draw, max_depth=5):
    depth = draw(st.integers(1, max_depth))
    blocks = []
    for idx in range(1, depth + 1):
        blocks.append(
            Block(
                Op(draw(st.integers(0, 6))),
                Op(draw(st.integers(0, 6))),
                draw(st.integers(0, idx)),
                draw(st.integers(0, idx)),
            )
        )
    return micro(blocks)


class TestEncoding:
    def test_single_layer_macro(self):
        arch = macro([MacroLayer(Op.CONV_3X3)])
        assert space.encode(arch) == [0, 2]

    def test_two_layer_macro_with_skip(self):
        arch = macro([MacroLayer(Op.CONV_3X3), MacroLayer(Op.MAX_POOL_3X3, (1,))])
        assert space.encode(arch) == [0, 2, 0, 1]

    def test_one_block_micro(self):
        cell = micro([Block(Op.IDENTITY, Op.CONV_5X5, CELL_MINUS_1, CELL_MINUS_2)])
        assert space.encode(cell) == [1, 6, 3, 1, 0]

    def test_skip_indicators_oldest_first(self):
        arch = macro(
            [
                MacroLayer(Op.CONV_3X3),
                MacroLayer(Op.CONV_3X3),
                MacroLayer(Op.AVG_POOL_3X3, (2,)),
            ]
        )
        # layer 3 indicators: [skip-from-1, skip-from-2]
        assert space.encode(arch) == [0, 2, 2, 0, 1, 0, 1]

    @given(macro_archs())
    @settings(max_examples=150)
    def test_macro_round_trip(self, arch):
        assert space.decode(space.encode(arch)) == arch

    @given(micro_cells())
    @settings(max_examples=150)
    def test_micro_round_trip(self, cell):
        assert space.decode(space.encode(cell)) == cell

    def test_decode_rejects_malformed(self):
        with pytest.raises(InvalidArchitecture):
            space.decode([])
        with pytest.raises(InvalidArchitecture):
            space.decode([2, 0])  # unknown space tag
        with pytest.raises(InvalidArchitecture):
            space.decode([0, 2, 0])  # truncated layer 2
        with pytest.raises(InvalidArchitecture):
            space.decode([1, 6, 3, 1])  # truncated block
        with pytest.raises(InvalidArchitecture):
            space.decode([0, 9])  # bad op token
        with pytest.raises(InvalidArchitecture):
            space.decode([0, 2, 0, 7])  # skip indicator not binary

    def test_identity_rejected_in_macro(self):
        with pytest.raises(InvalidArchitecture):
            MacroLayer(Op.IDENTITY)

    def test_invalid_skip_rejected(self):
        with pytest.raises(InvalidArchitecture):
            macro([MacroLayer(Op.CONV_3X3, (1,))])
        with pytest.raises(InvalidArchitecture):
            macro([MacroLayer(Op.CONV_3X3), MacroLayer(Op.CONV_3X3, (2,))])

    def test_invalid_block_ref_rejected(self):
        with pytest.raises(InvalidArchitecture):
            micro([Block(Op.CONV_3X3, Op.CONV_3X3, 2, 0)])


class TestVocabulary:
    def test_surrogate_token_ranges(self):
        arch = macro([MacroLayer(Op.CONV_3X3), MacroLayer(Op.MAX_POOL_3X3, (1,))])
        assert space.surrogate_tokens(arch) == [0, 2 + 2, 2 + 0, 9 + 1]
        cell = micro([Block(Op.IDENTITY, Op.CONV_5X5, CELL_MINUS_1, CELL_MINUS_2)])
        assert space.surrogate_tokens(cell) == [1, 2 + 6, 2 + 3, 11 + 1, 11 + 0]

    def test_vocab_size_default(self):
        # 2 tags + 7 ops + 2 skip bits + 6 input tokens for 5-block cells
        assert space.vocab_size() == 17

    @given(micro_cells())
    @settings(max_examples=60)
    def test_tokens_below_vocab(self, cell):
        assert all(t < space.vocab_size() for t in space.surrogate_tokens(cell))


class TestEnumeration:
    @pytest.mark.parametrize("level,count", [(1, 6), (2, 12), (3, 24), (4, 48), (5, 96)])
    def test_macro_level_counts(self, level, count):
        exts = space.enumerate_level(Space.MACRO, level)
        assert len(exts) == count == 6 * 2 ** (level - 1)
        assert len(set(exts)) == count

    @pytest.mark.parametrize(
        "level,count", [(1, 196), (2, 441), (3, 784), (4, 1225), (5, 1764)]
    )
    def test_micro_level_counts(self, level, count):
        exts = space.enumerate_level(Space.MICRO, level, max_level=5)
        assert len(exts) == count == 49 * (level + 1) ** 2
        assert len(set(exts)) == count

    def test_deterministic_lexicographic_order(self):
        exts = space.enumerate_level(Space.MACRO, 3)
        tokens = []
        base = macro([MacroLayer(Op.CONV_3X3), MacroLayer(Op.CONV_3X3)])
        for ext in exts:
            tokens.append(space.encode(space.extend(base, ext)))
        assert tokens == sorted(tokens)

    def test_level_out_of_range(self):
        with pytest.raises(ValueError):
            space.enumerate_level(Space.MACRO, 0)
        with pytest.raises(ValueError):
            space.enumerate_level(Space.MACRO, 13)
        with pytest.raises(ValueError):
            space.enumerate_level(Space.MICRO, 6)
        # explicit bound wins over the default
        assert len(space.enumerate_level(Space.MICRO, 6, max_level=6)) == 49 * 49


class TestExtend:
    def test_level2_product_count(self):
        level1 = [space.singleton(Space.MACRO, e) for e in space.enumerate_level(Space.MACRO, 1)]
        exts = space.enumerate_level(Space.MACRO, 2)
        combined = {space.extend(c, e) for c in level1 for e in exts}
        assert len(combined) == len(level1) * len(exts) == 72

    def test_level3_product_count_k25(self):
        level1 = [space.singleton(Space.MACRO, e) for e in space.enumerate_level(Space.MACRO, 1)]
        exts2 = space.enumerate_level(Space.MACRO, 2)
        level2 = [space.extend(c, e) for c in level1 for e in exts2]
        candidates = level2[:25]
        exts3 = space.enumerate_level(Space.MACRO, 3)
        combined = {space.extend(c, e) for c in candidates for e in exts3}
        assert len(combined) == 25 * 24 == 600

    def test_micro_extension_respects_dag(self):
        cell = micro([Block(Op.CONV_3X3, Op.CONV_3X3, 0, 1)])
        for ext in space.enumerate_level(Space.MICRO, 2):
            grown = space.extend(cell, ext)
            assert grown.depth == 2
            assert max(grown.body.blocks[1].in1, grown.body.blocks[1].in2) <= 2

    def test_level_mismatch_rejected(self):
        base = macro([MacroLayer(Op.CONV_3X3)])
        bad = MacroLayer(Op.CONV_3X3, (2,))  # needs at least 3 layers
        with pytest.raises(InvalidArchitecture):
            space.extend(base, bad)
        cell = micro([Block(Op.CONV_3X3, Op.CONV_3X3, 0, 1)])
        with pytest.raises(InvalidArchitecture):
            space.extend(cell, Block(Op.CONV_3X3, Op.CONV_3X3, 4, 0))


class TestCardinality:
    def test_macro_small(self):
        assert space.cardinality(Space.MACRO, 1) == 6

    def test_macro_l12_exact(self):
        n = space.cardinality(Space.MACRO, 12)
        assert n == 160618186625454535808756219904
        assert abs(float(n) / 1.606e29 - 1.0) < 1e-3

    def test_micro_level1(self):
        assert space.cardinality(Space.MICRO, 1) == 196

    def test_micro_b5_exact(self):
        assert space.cardinality(Space.MICRO, 5) == 146435169081600

    @pytest.mark.parametrize("sp", [Space.MACRO, Space.MICRO])
    def test_closed_form_equals_iterated_product(self, sp):
        for top in range(1, 8):
            prod = 1
            for level in range(1, top + 1):
                prod *= len(space.enumerate_level(sp, level, max_level=top))
            assert space.cardinality(sp, top) == prod

    def test_rejects_bad_level(self):
        with pytest.raises(ValueError):
            space.cardinality(Space.MACRO, 0)


class TestHash:
    def test_no_collisions_macro_l3(self):
        hashes = {a.canonical_hash for a in oracles.all_macro_archs(3)}
        assert len(hashes) == space.cardinality(Space.MACRO, 3) == 1728

    def test_no_collisions_micro_b2(self):
        hashes = set()
        count = 0
        for cell in oracles.all_micro_cells(2):
            hashes.add(cell.canonical_hash)
            count += 1
        assert count == 86436
        assert len(hashes) == 86436

    def test_hash_is_function_of_encoding(self):
        a = macro([MacroLayer(Op.CONV_3X3), MacroLayer(Op.CONV_5X5, (1,))])
        b = space.decode(space.encode(a))
        assert a.canonical_hash == b.canonical_hash
        assert a.hash_hex == f"{a.canonical_hash:016x}"


class TestCellOutputs:
    def test_single_block(self):
        cell = micro([Block(Op.CONV_3X3, Op.CONV_3X3, 0, 1)]).body
        assert space.cell_output_blocks(cell) == {1}

    def test_consumed_block_excluded(self):
        cell = micro(
            [
                Block(Op.CONV_3X3, Op.CONV_3X3, 0, 1),
                Block(Op.CONV_5X5, Op.MAX_POOL_3X3, 2, 2),  # reads block 1 twice
            ]
        ).body
        assert space.cell_output_blocks(cell) == {2}

    def test_no_internal_edges(self):
        cell = micro(
            [
                Block(Op.CONV_3X3, Op.CONV_3X3, 0, 1),
                Block(Op.CONV_5X5, Op.CONV_3X3, 0, 0),
                Block(Op.IDENTITY, Op.CONV_3X3, 1, 1),
            ]
        ).body
        assert space.cell_output_blocks(cell) == {1, 2, 3}

    @given(micro_cells())
    @settings(max_examples=100)
    def test_last_block_always_included(self, cell):
        assert cell.depth in space.cell_output_blocks(cell.body)


class TestDot:
    @staticmethod
    def edges_of(dot: str) -> list[tuple[str, str]]:
        out = []
        for line in dot.splitlines():
            line = line.strip().rstrip(";")
            if "->" in line:
                src, dst = (part.strip() for part in line.split("->"))
                out.append((src, dst))
        return out

    def test_single_layer_macro(self):
        dot = space.export_dot(macro([MacroLayer(Op.CONV_3X3)]))
        assert 'stem [label="stem"' in dot
        assert "l1" in dot and "gap_softmax" in dot
        assert self.edges_of(dot) == [("stem", "l1"), ("l1", "out")]

    def test_two_layer_macro_with_skip(self):
        arch = macro([MacroLayer(Op.CONV_3X3), MacroLayer(Op.MAX_POOL_3X3, (1,))])
        edges = self.edges_of(space.export_dot(arch))
        assert sorted(edges) == sorted(
            [("stem", "l1"), ("l1", "l2"), ("l2", "out")]
        )

    def test_empty_skips_fall_back_to_stem(self):
        arch = macro([MacroLayer(Op.CONV_3X3), MacroLayer(Op.MAX_POOL_3X3)])
        edges = self.edges_of(space.export_dot(arch))
        assert ("stem", "l2") in edges

    def test_micro_single_block(self):
        cell = micro([Block(Op.IDENTITY, Op.CONV_5X5, CELL_MINUS_1, CELL_MINUS_2)])
        edges = self.edges_of(space.export_dot(cell))
        assert sorted(edges) == sorted(
            [
                ("cm1", "b1_op1"),
                ("cm2", "b1_op2"),
                ("b1_op1", "b1_sum"),
                ("b1_op2", "b1_sum"),
                ("b1_sum", "out"),
            ]
        )

    def test_deterministic(self):
        arch = macro([MacroLayer(Op.CONV_3X3), MacroLayer(Op.MAX_POOL_3X3, (1,))])
        assert space.export_dot(arch) == space.export_dot(arch)


class TestJson:
    def test_macro_round_trip(self):
        arch = macro([MacroLayer(Op.CONV_3X3), MacroLayer(Op.DEPTH_CONV_5X5, (1,))])
        doc = space.to_json_dict(arch)
        assert doc == {
            "space": "macro",
            "layers": [
                {"op": "conv_3x3", "skips": []},
                {"op": "depth_conv_5x5", "skips": [1]},
            ],
        }
        assert space.from_json_dict(doc) == arch

    def test_micro_round_trip(self):
        cell = micro(
            [
                Block(Op.IDENTITY, Op.CONV_5X5, CELL_MINUS_1, CELL_MINUS_2),
                Block(Op.CONV_3X3, Op.MAX_POOL_3X3, 2, 0),
            ]
        )
        doc = space.to_json_dict(cell)
        assert doc["blocks"][0]["in1"] == "cell-1"
        assert doc["blocks"][1]["in1"] == 1  # 1-indexed block number
        assert space.from_json_dict(doc) == cell

    @given(macro_archs(), micro_cells())
    @settings(max_examples=60)
    def test_json_round_trip_property(self, arch, cell):
        assert space.from_json_dict(space.to_json_dict(arch)) == arch
        assert space.from_json_dict(space.to_json_dict(cell)) == cell

    def test_canonical_json_is_stable(self):
        arch = macro([MacroLayer(Op.CONV_3X3)])
        text = space.canonical_json(arch)
        assert text == '{"layers":[{"op":"conv_3x3","skips":[]}],"space":"macro"}'
        assert json.loads(text) == space.to_json_dict(arch)

    def test_bad_documents_rejected(self):
        with pytest.raises(InvalidArchitecture):
            space.from_json_dict({"space": "nano"})
        with pytest.raises(InvalidArchitecture):
            space.from_json_dict({"space": "macro", "layers": [{"op": "conv_9x9", "skips": []}]})
        with pytest.raises(InvalidArchitecture):
            space.from_json_dict({"space": "macro", "layers": [{"op": "identity", "skips": []}]})
        with pytest.raises(InvalidArchitecture):
            space.from_json_dict(
                {"space": "micro", "blocks": [{"op1": "conv_3x3", "op2": "conv_3x3", "in1": "cell-3", "in2": 0}]}
            )


class TestRandomArch:
    def test_depths_and_validity(self):
        rng = np.random.default_rng(1)
        for level in (1, 3, 5):
            a = space.random_arch(Space.MACRO, level, rng)
            assert a.depth == level
            c = space.random_arch(Space.MICRO, level, rng)
            assert c.depth == level

    def test_seeded_reproducibility(self):
        a = space.random_arch(Space.MACRO, 4, np.random.default_rng(9))
        b = space.random_arch(Space.MACRO, 4, np.random.default_rng(9))
        assert a == b
