"""Macro and micro architecture search spaces.

The macro space describes whole convolutional networks: each layer picks
one of six operations and an arbitrary subset of earlier layers as skip
inputs. The micro space describes a single cell of blocks; a network is a
stack of copies of that cell, so the cell structure alone identifies the
network. Both spaces are finite, enumerable per complexity level, and
every architecture has a canonical integer-token encoding from which a
stable 64-bit digest is derived.

All types here are immutable after construction and all functions are
pure, so everything in this module is safe to share across threads.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum, unique

import numpy as np

from .hashing import CANONICAL_HASH_SEED, fnv1a64


class InvalidArchitecture(ValueError):
    """An architecture description violates a structural invariant."""


@unique
class Op(IntEnum):
    """Layer/block operations. The integer value is the encoding token."""

    MAX_POOL_3X3 = 0
    AVG_POOL_3X3 = 1
    CONV_3X3 = 2
    CONV_5X5 = 3
    DEPTH_CONV_3X3 = 4
    DEPTH_CONV_5X5 = 5
    IDENTITY = 6  # micro space only


MACRO_OPS: tuple[Op, ...] = tuple(Op(i) for i in range(6))
MICRO_OPS: tuple[Op, ...] = tuple(Op(i) for i in range(7))

OP_NAMES: dict[Op, str] = {
    Op.MAX_POOL_3X3: "max_pool_3x3",
    Op.AVG_POOL_3X3: "avg_pool_3x3",
    Op.CONV_3X3: "conv_3x3",
    Op.CONV_5X5: "conv_5x5",
    Op.DEPTH_CONV_3X3: "depth_conv_3x3",
    Op.DEPTH_CONV_5X5: "depth_conv_5x5",
    Op.IDENTITY: "identity",
}
OP_FROM_NAME: dict[str, Op] = {v: k for k, v in OP_NAMES.items()}


class Space(str, Enum):
    MACRO = "macro"
    MICRO = "micro"


# Default complexity bounds (also the search defaults).
MACRO_MAX_LEVEL = 12
MICRO_MAX_LEVEL = 5

# Block input references, in encoding-token form: 0 and 1 are the outputs
# of the two preceding cells, token j+1 is the output of block j (j >= 1)
# of the same cell. For block b the legal tokens are 0..b, i.e. b+1 values.
CELL_MINUS_2 = 0
CELL_MINUS_1 = 1


def prev_block(j: int) -> int:
    """Input-reference token for the output of block ``j`` (1-indexed)."""
    if j < 1:
        raise InvalidArchitecture(f"block index must be >= 1, got {j}")
    return j + 1


def max_level_for(space: Space) -> int:
    return MACRO_MAX_LEVEL if space is Space.MACRO else MICRO_MAX_LEVEL


@dataclass(frozen=True)
class MacroLayer:
    """One macro layer: an operation plus skip inputs to earlier layers.

    ``skips`` holds 1-indexed earlier-layer indices; it is stored sorted
    and deduplicated. An empty set means the layer reads the stem.
    """

    op: Op
    skips: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.op not in MACRO_OPS:
            raise InvalidArchitecture(
                f"operation {OP_NAMES.get(self.op, self.op)!r} is not in the macro op set"
            )
        skips = tuple(sorted(set(int(s) for s in self.skips)))
        if skips and skips[0] < 1:
            raise InvalidArchitecture(f"skip indices must be >= 1, got {skips}")
        object.__setattr__(self, "skips", skips)


@dataclass(frozen=True)
class MacroArch:
    """A complete macro network: an ordered tuple of layers."""

    layers: tuple[MacroLayer, ...]

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise InvalidArchitecture("a macro architecture needs at least one layer")
        for idx, layer in enumerate(layers, start=1):
            bad = [s for s in layer.skips if s >= idx]
            if bad:
                raise InvalidArchitecture(
                    f"layer {idx} references non-earlier layers {bad}"
                )

    @property
    def depth(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class Block:
    """One micro block: two operations applied to two inputs, summed."""

    op1: Op
    op2: Op
    in1: int
    in2: int

    def __post_init__(self) -> None:
        for op in (self.op1, self.op2):
            if op not in MICRO_OPS:
                raise InvalidArchitecture(f"unknown operation {op!r}")
        for name in ("in1", "in2"):
            ref = getattr(self, name)
            if isinstance(ref, bool) or not isinstance(ref, (int, np.integer)) or ref < 0:
                raise InvalidArchitecture(f"input reference must be a token >= 0, got {ref!r}")
            object.__setattr__(self, name, int(ref))


@dataclass(frozen=True)
class MicroCell:
    """A cell of blocks; the whole micro network is stacks of this cell.

    The reduction variant reuses the same structure with strides, which is
    an evaluator concern and not represented here.
    """

    blocks: tuple[Block, ...]

    def __post_init__(self) -> None:
        blocks = tuple(self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks:
            raise InvalidArchitecture("a cell needs at least one block")
        for idx, block in enumerate(blocks, start=1):
            for ref in (block.in1, block.in2):
                if ref > idx:  # token idx == prev_block(idx - 1) is the newest legal ref
                    raise InvalidArchitecture(
                        f"block {idx} references block {ref - 1}, which is not earlier"
                    )

    @property
    def depth(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True)
class ArchDescriptor:
    """An architecture tagged with its space and canonical 64-bit digest."""

    space: Space
    body: MacroArch | MicroCell
    canonical_hash: int = field(init=False, compare=False, default=0)

    def __post_init__(self) -> None:
        if self.space is Space.MACRO and not isinstance(self.body, MacroArch):
            raise InvalidArchitecture("macro descriptor must wrap a MacroArch")
        if self.space is Space.MICRO and not isinstance(self.body, MicroCell):
            raise InvalidArchitecture("micro descriptor must wrap a MicroCell")
        object.__setattr__(self, "canonical_hash", canonical_hash(encode(self)))

    @property
    def depth(self) -> int:
        return self.body.depth

    @property
    def hash_hex(self) -> str:
        return f"{self.canonical_hash:016x}"


def macro_descriptor(layers) -> ArchDescriptor:
    return ArchDescriptor(Space.MACRO, MacroArch(tuple(layers)))


def micro_descriptor(blocks) -> ArchDescriptor:
    return ArchDescriptor(Space.MICRO, MicroCell(tuple(blocks)))


# ---------------------------------------------------------------------------
# token encoding


def encode(arch: ArchDescriptor) -> list[int]:
    """Encode an architecture as a flat token sequence.

    The first token tags the space (0 macro, 1 micro). Macro layers emit
    one op token followed by ``l-1`` binary skip indicators, oldest layer
    first. Micro blocks emit ``[op1, op2, in1, in2]``. The encoding is
    injective per space; ``decode`` is its exact inverse.
    """
    if arch.space is Space.MACRO:
        tokens = [0]
        for idx, layer in enumerate(arch.body.layers, start=1):
            tokens.append(int(layer.op))
            present = set(layer.skips)
            tokens.extend(1 if j in present else 0 for j in range(1, idx))
        return tokens
    tokens = [1]
    for block in arch.body.blocks:
        tokens.extend((int(block.op1), int(block.op2), block.in1, block.in2))
    return tokens


def decode(tokens) -> ArchDescriptor:
    """Inverse of :func:`encode`. Rejects malformed sequences."""
    tokens = list(tokens)
    if not tokens:
        raise InvalidArchitecture("empty token sequence")
    tag, rest = tokens[0], tokens[1:]
    if tag == 0:
        layers: list[MacroLayer] = []
        pos = 0
        idx = 1
        while pos < len(rest):
            need = 1 + (idx - 1)
            chunk = rest[pos : pos + need]
            if len(chunk) < need:
                raise InvalidArchitecture(
                    f"truncated macro encoding at layer {idx}: wanted {need} tokens"
                )
            op, bits = chunk[0], chunk[1:]
            if not 0 <= op < len(MACRO_OPS):
                raise InvalidArchitecture(f"bad macro op token {op} at layer {idx}")
            if any(b not in (0, 1) for b in bits):
                raise InvalidArchitecture(f"bad skip indicator in layer {idx}: {bits}")
            layers.append(
                MacroLayer(Op(op), tuple(j for j, b in enumerate(bits, start=1) if b))
            )
            pos += need
            idx += 1
        return macro_descriptor(layers)
    if tag == 1:
        if len(rest) % 4 != 0 or not rest:
            raise InvalidArchitecture("micro encoding length must be a positive multiple of 4")
        blocks = []
        for b, i in enumerate(range(0, len(rest), 4), start=1):
            op1, op2, in1, in2 = rest[i : i + 4]
            for op in (op1, op2):
                if not 0 <= op < len(MICRO_OPS):
                    raise InvalidArchitecture(f"bad micro op token {op} in block {b}")
            blocks.append(Block(Op(op1), Op(op2), in1, in2))
        return micro_descriptor(blocks)
    raise InvalidArchitecture(f"unknown space tag {tag}")


def canonical_hash(tokens) -> int:
    """Stable 64-bit digest of a token sequence (two bytes per token, LE)."""
    payload = b"".join(int(t).to_bytes(2, "little") for t in tokens)
    return fnv1a64(payload, CANONICAL_HASH_SEED)


# ---------------------------------------------------------------------------
# surrogate vocabulary
#
# The raw encoding reuses small integers across token kinds (an op token 0
# and a skip indicator 0 mean different things), so tokens are re-based
# into disjoint id ranges before they reach the learned scorer:
#
#   ids 0..1    space tags
#   ids 2..8    operations
#   ids 9..10   skip indicators
#   ids 11..    block input references (0-based token + 11)

TAG_VOCAB_OFFSET = 0
OP_VOCAB_OFFSET = 2
SKIP_VOCAB_OFFSET = 9
INPUT_VOCAB_OFFSET = 11


def vocab_size(max_blocks: int = MICRO_MAX_LEVEL) -> int:
    """Shared vocabulary size for cells of up to ``max_blocks`` blocks."""
    return INPUT_VOCAB_OFFSET + max_blocks + 1


def surrogate_tokens(arch: ArchDescriptor) -> list[int]:
    """Vocabulary ids for an architecture, for consumption by the scorer."""
    if arch.space is Space.MACRO:
        ids = [TAG_VOCAB_OFFSET + 0]
        for idx, layer in enumerate(arch.body.layers, start=1):
            ids.append(OP_VOCAB_OFFSET + int(layer.op))
            present = set(layer.skips)
            ids.extend(
                SKIP_VOCAB_OFFSET + (1 if j in present else 0) for j in range(1, idx)
            )
        return ids
    ids = [TAG_VOCAB_OFFSET + 1]
    for block in arch.body.blocks:
        ids.append(OP_VOCAB_OFFSET + int(block.op1))
        ids.append(OP_VOCAB_OFFSET + int(block.op2))
        ids.append(INPUT_VOCAB_OFFSET + block.in1)
        ids.append(INPUT_VOCAB_OFFSET + block.in2)
    return ids


# ---------------------------------------------------------------------------
# enumeration, extension, counting


def enumerate_level(space: Space, level: int, max_level: int | None = None):
    """All legal single-level extensions, in token-lexicographic order.

    For the macro space an extension is one layer at depth ``level``; for
    the micro space it is one block at index ``level``.
    """
    if level < 1:
        raise ValueError(f"level must be >= 1, got {level}")
    limit = max_level if max_level is not None else max_level_for(space)
    if level > limit:
        raise ValueError(f"level {level} exceeds the configured maximum {limit}")
    if space is Space.MACRO:
        out: list[MacroLayer] = []
        for op in MACRO_OPS:
            for bits in itertools.product((0, 1), repeat=level - 1):
                out.append(
                    MacroLayer(op, tuple(j for j, b in enumerate(bits, start=1) if b))
                )
        return out
    refs = range(level + 1)  # cell(-2), cell(-1), blocks 1..level-1
    return [
        Block(op1, op2, in1, in2)
        for op1 in MICRO_OPS
        for op2 in MICRO_OPS
        for in1 in refs
        for in2 in refs
    ]


def extend(candidate: ArchDescriptor, ext) -> ArchDescriptor:
    """Append a level extension to a candidate one level shorter."""
    if candidate.space is Space.MACRO:
        if not isinstance(ext, MacroLayer):
            raise InvalidArchitecture("macro candidates extend with a MacroLayer")
        new_idx = candidate.depth + 1
        if any(s >= new_idx for s in ext.skips):
            raise InvalidArchitecture(
                f"extension skips {ext.skips} do not fit at layer {new_idx}"
            )
        return macro_descriptor(candidate.body.layers + (ext,))
    if not isinstance(ext, Block):
        raise InvalidArchitecture("micro candidates extend with a Block")
    new_idx = candidate.depth + 1
    if max(ext.in1, ext.in2) > new_idx:
        raise InvalidArchitecture(
            f"extension inputs ({ext.in1}, {ext.in2}) do not fit at block {new_idx}"
        )
    return micro_descriptor(candidate.body.blocks + (ext,))


def singleton(space: Space, ext) -> ArchDescriptor:
    """Wrap a level-1 extension as a complete depth-1 architecture."""
    if space is Space.MACRO:
        return macro_descriptor([ext])
    return micro_descriptor([ext])


def cardinality(space: Space, max_level: int) -> int:
    """Exact number of complete architectures of depth ``max_level``.

    Macro: prod_l 6 * 2^(l-1) = 6^L * 2^(L(L-1)/2). Micro: prod_b 49 (b+1)^2.
    Exact integer arithmetic; the result overflows 64 bits quickly.
    """
    if max_level < 1:
        raise ValueError(f"max_level must be >= 1, got {max_level}")
    if space is Space.MACRO:
        return 6**max_level * 2 ** (max_level * (max_level - 1) // 2)
    total = 1
    for b in range(1, max_level + 1):
        total *= 49 * (b + 1) ** 2
    return total


def cell_output_blocks(cell: MicroCell) -> set[int]:
    """Indices of blocks whose output no other block consumes.

    These are the blocks whose outputs are concatenated to form the cell
    output. The last block is always among them.
    """
    consumed = {
        ref - 1
        for block in cell.blocks
        for ref in (block.in1, block.in2)
        if ref >= 2
    }
    return {b for b in range(1, len(cell.blocks) + 1) if b not in consumed}


def random_arch(space: Space, level: int, rng: np.random.Generator) -> ArchDescriptor:
    """Uniformly random architecture of exactly ``level`` layers/blocks."""
    if space is Space.MACRO:
        layers = []
        for idx in range(1, level + 1):
            op = Op(int(rng.integers(0, len(MACRO_OPS))))
            skips = tuple(
                j for j in range(1, idx) if rng.integers(0, 2) == 1
            )
            layers.append(MacroLayer(op, skips))
        return macro_descriptor(layers)
    blocks = []
    for idx in range(1, level + 1):
        op1 = Op(int(rng.integers(0, len(MICRO_OPS))))
        op2 = Op(int(rng.integers(0, len(MICRO_OPS))))
        in1 = int(rng.integers(0, idx + 1))
        in2 = int(rng.integers(0, idx + 1))
        blocks.append(Block(op1, op2, in1, in2))
    return micro_descriptor(blocks)


# ---------------------------------------------------------------------------
# JSON persistence
#
# {"space": "macro", "layers": [{"op": "conv_3x3", "skips": [1, 2]}, ...]}
# {"space": "micro", "blocks": [{"op1": ..., "op2": ..., "in1": "cell-1",
#                                "in2": 1}, ...]}
#
# Block inputs serialize as "cell-2"/"cell-1" for the two preceding cells
# and as the plain 1-indexed block number otherwise.

_REF_NAMES = {CELL_MINUS_2: "cell-2", CELL_MINUS_1: "cell-1"}


def _ref_to_json(ref: int):
    return _REF_NAMES.get(ref, ref - 1)


def _ref_from_json(value) -> int:
    if value == "cell-2":
        return CELL_MINUS_2
    if value == "cell-1":
        return CELL_MINUS_1
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidArchitecture(f"bad input reference {value!r}")
    return prev_block(value)


def to_json_dict(arch: ArchDescriptor) -> dict:
    if arch.space is Space.MACRO:
        return {
            "space": "macro",
            "layers": [
                {"op": OP_NAMES[layer.op], "skips": list(layer.skips)}
                for layer in arch.body.layers
            ],
        }
    return {
        "space": "micro",
        "blocks": [
            {
                "op1": OP_NAMES[block.op1],
                "op2": OP_NAMES[block.op2],
                "in1": _ref_to_json(block.in1),
                "in2": _ref_to_json(block.in2),
            }
            for block in arch.body.blocks
        ],
    }


def _parse_op(name, field_name: str) -> Op:
    if not isinstance(name, str) or name not in OP_FROM_NAME:
        raise InvalidArchitecture(f"unknown operation {name!r} in field {field_name!r}")
    return OP_FROM_NAME[name]


def from_json_dict(doc: dict) -> ArchDescriptor:
    if not isinstance(doc, dict):
        raise InvalidArchitecture("architecture document must be a JSON object")
    space = doc.get("space")
    if space == "macro":
        layers_doc = doc.get("layers")
        if not isinstance(layers_doc, list):
            raise InvalidArchitecture("macro document needs a 'layers' array")
        layers = []
        for entry in layers_doc:
            if not isinstance(entry, dict):
                raise InvalidArchitecture("each layer must be an object")
            op = _parse_op(entry.get("op"), "op")
            if op not in MACRO_OPS:
                raise InvalidArchitecture("field 'op': identity is micro-only")
            skips = entry.get("skips", [])
            if not isinstance(skips, list) or any(
                isinstance(s, bool) or not isinstance(s, int) for s in skips
            ):
                raise InvalidArchitecture("field 'skips' must be a list of integers")
            layers.append(MacroLayer(op, tuple(skips)))
        return macro_descriptor(layers)
    if space == "micro":
        blocks_doc = doc.get("blocks")
        if not isinstance(blocks_doc, list):
            raise InvalidArchitecture("micro document needs a 'blocks' array")
        blocks = []
        for entry in blocks_doc:
            if not isinstance(entry, dict):
                raise InvalidArchitecture("each block must be an object")
            blocks.append(
                Block(
                    _parse_op(entry.get("op1"), "op1"),
                    _parse_op(entry.get("op2"), "op2"),
                    _ref_from_json(entry.get("in1")),
                    _ref_from_json(entry.get("in2")),
                )
            )
        return micro_descriptor(blocks)
    raise InvalidArchitecture(f"field 'space' must be 'macro' or 'micro', got {space!r}")


def canonical_json(arch: ArchDescriptor) -> str:
    """Canonical JSON text: sorted keys, no whitespace. Hashing input."""
    return json.dumps(to_json_dict(arch), sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# GraphViz export


def export_dot(arch: ArchDescriptor) -> str:
    """Render the dataflow graph of an architecture in DOT syntax.

    One node per layer (macro) or per block operation plus a sum node
    (micro), plus stem/pseudo-input and output nodes. One edge per data
    dependency, including skip connections. Output is deterministic.
    """
    lines = ["digraph arch {", "  rankdir=TB;"]
    if arch.space is Space.MACRO:
        lines.append('  stem [label="stem", shape=box];')
        for idx, layer in enumerate(arch.body.layers, start=1):
            lines.append(f'  l{idx} [label="{idx}: {OP_NAMES[layer.op]}"];')
        lines.append('  out [label="gap_softmax", shape=box];')
        for idx, layer in enumerate(arch.body.layers, start=1):
            sources = [f"l{j}" for j in layer.skips] or ["stem"]
            for src in sources:
                lines.append(f"  {src} -> l{idx};")
        lines.append(f"  l{arch.depth} -> out;")
    else:
        lines.append('  cm2 [label="cell-2", shape=box];')
        lines.append('  cm1 [label="cell-1", shape=box];')
        node = {CELL_MINUS_2: "cm2", CELL_MINUS_1: "cm1"}
        for idx, block in enumerate(arch.body.blocks, start=1):
            lines.append(f'  b{idx}_op1 [label="b{idx}.1: {OP_NAMES[block.op1]}"];')
            lines.append(f'  b{idx}_op2 [label="b{idx}.2: {OP_NAMES[block.op2]}"];')
            lines.append(f'  b{idx}_sum [label="+", shape=circle];')
            node[prev_block(idx)] = f"b{idx}_sum"
        lines.append('  out [label="concat", shape=box];')
        for idx, block in enumerate(arch.body.blocks, start=1):
            lines.append(f"  {node[block.in1]} -> b{idx}_op1;")
            lines.append(f"  {node[block.in2]} -> b{idx}_op2;")
            lines.append(f"  b{idx}_op1 -> b{idx}_sum;")
            lines.append(f"  b{idx}_op2 -> b{idx}_sum;")
        for idx in sorted(cell_output_blocks(arch.body)):
            lines.append(f"  b{idx}_sum -> out;")
    lines.append("}")
    return "\n".join(lines) + "\n"
