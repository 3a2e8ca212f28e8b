import { describe, expect, it } from "vitest";

import { canonicalJson, fnv1a64, stubScore } from "../src/canonical";

// vectors frozen from the engine side; both implementations must agree
// bit for bit
const VECTORS = [
  {
    doc: { space: "macro", layers: [{ op: "conv_3x3", skips: [] }] },
    canonical: '{"layers":[{"op":"conv_3x3","skips":[]}],"space":"macro"}',
    score: 0.22083753306511852,
  },
  {
    doc: {
      space: "macro",
      layers: [
        { op: "max_pool_3x3", skips: [1, 2] },
        { op: "depth_conv_5x5", skips: [] },
      ],
    },
    canonical:
      '{"layers":[{"op":"max_pool_3x3","skips":[1,2]},{"op":"depth_conv_5x5","skips":[]}],"space":"macro"}',
    score: 0.66806064412814,
  },
  {
    doc: {
      space: "micro",
      blocks: [{ op1: "identity", op2: "conv_5x5", in1: "cell-1", in2: "cell-2" }],
    },
    canonical:
      '{"blocks":[{"in1":"cell-1","in2":"cell-2","op1":"identity","op2":"conv_5x5"}],"space":"micro"}',
    score: 0.30952147164601623,
  },
  {
    doc: {
      space: "micro",
      blocks: [
        { op1: "avg_pool_3x3", op2: "conv_3x3", in1: 1, in2: "cell-1" },
        { op1: "identity", op2: "identity", in1: 2, in2: 0 },
      ],
    },
    canonical:
      '{"blocks":[{"in1":1,"in2":"cell-1","op1":"avg_pool_3x3","op2":"conv_3x3"},{"in1":2,"in2":0,"op1":"identity","op2":"identity"}],"space":"micro"}',
    score: 0.606101898187767,
  },
];

describe("fnv1a64", () => {
  it("matches the reference digests", () => {
    const enc = new TextEncoder();
    expect(fnv1a64(enc.encode(""), 0n).toString(16)).toBe("cbf29ce484222325");
    expect(fnv1a64(enc.encode("hello"), 0n).toString(16)).toBe("a430d84680aabd0b");
  });
});

describe("canonicalJson", () => {
  it("sorts keys recursively with no whitespace", () => {
    for (const v of VECTORS) {
      expect(canonicalJson(v.doc)).toBe(v.canonical);
    }
  });

  it("is insensitive to key insertion order", () => {
    expect(canonicalJson({ b: 1, a: [{ d: 2, c: 3 }] })).toBe(
      canonicalJson({ a: [{ c: 3, d: 2 }], b: 1 })
    );
  });

  it("rejects values without a canonical form", () => {
    expect(() => canonicalJson(undefined)).toThrow(TypeError);
  });
});

describe("stubScore", () => {
  it("matches the engine-side oracle exactly", () => {
    for (const v of VECTORS) {
      expect(stubScore(v.doc)).toBe(v.score);
    }
  });

  it("is deterministic and in [0, 1)", () => {
    const doc = VECTORS[0].doc;
    const a = stubScore(doc);
    expect(a).toBe(stubScore(doc));
    expect(a).toBeGreaterThanOrEqual(0);
    expect(a).toBeLessThan(1);
  });
});
