/**
 * Canonical JSON and the deterministic stub scorer.
 *
 * The engine hashes architecture documents as canonical JSON (object keys
 * sorted, no whitespace, ASCII content) with seeded 64-bit FNV-1a. This
 * module reproduces that function bit for bit so an eval answered by the
 * stub scorer equals the engine-side oracle exactly.
 */

const MASK64 = (1n << 64n) - 1n;
const FNV64_OFFSET = 0xcbf29ce484222325n;
const FNV64_PRIME = 0x100000001b3n;

/** Must match the engine's published stub-scorer seed. */
export const STUB_SCORE_SEED = 0x45504e415331n;

export function fnv1a64(data: Uint8Array, seed: bigint = 0n): bigint {
  let h = FNV64_OFFSET ^ (seed & MASK64);
  for (const byte of data) {
    h ^= BigInt(byte);
    h = (h * FNV64_PRIME) & MASK64;
  }
  return h;
}

/**
 * JSON with recursively sorted object keys and no whitespace. Matches
 * the engine's canonical serialization for the ASCII-only architecture
 * documents that travel over the wire.
 */
export function canonicalJson(value: unknown): string {
  if (value === null || typeof value === "number" || typeof value === "boolean") {
    return JSON.stringify(value);
  }
  if (typeof value === "string") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  if (typeof value === "object") {
    const entries = Object.keys(value as Record<string, unknown>)
      .sort()
      .map(
        (key) =>
          JSON.stringify(key) + ":" + canonicalJson((value as Record<string, unknown>)[key])
      );
    return "{" + entries.join(",") + "}";
  }
  throw new TypeError(`value of type ${typeof value} has no canonical JSON form`);
}

/** Deterministic score in [0, 1) derived from the canonical arch JSON. */
export function stubScore(arch: unknown): number {
  const canon = canonicalJson(arch);
  const digest = fnv1a64(new TextEncoder().encode(canon), STUB_SCORE_SEED);
  return Number(digest) / 2 ** 64;
}
