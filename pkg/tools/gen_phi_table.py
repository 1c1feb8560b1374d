#!/usr/bin/env python3
"""Offline generator for the fixed-point standard-normal CDF table.

Writes src/detq/phi_table.py: 769 Q16 values of Phi(z) on the Q6 grid
z = -6.00 ... +6.00, computed from a 50-digit erf oracle, together with a
SHA-256 digest of the little-endian uint16 encoding.  Run from the repo
root; the output module is checked in and never regenerated at runtime.
"""

import hashlib
import pathlib

import mpmath

mpmath.mp.dps = 50

GRID_FRAC_BITS = 6
Z_LIMIT = 6
N = 2 * Z_LIMIT * (1 << GRID_FRAC_BITS) + 1  # 769


def phi_q16(z_q6: int) -> int:
    z = mpmath.mpf(z_q6) / (1 << GRID_FRAC_BITS)
    phi = (1 + mpmath.erf(z / mpmath.sqrt(2))) / 2
    v = int(mpmath.nint(phi * 65536))
    # clamp to [1, 65535]: keeps the table exactly antisymmetric
    # (phi[z] + phi[-z] == 65536) despite tail saturation
    return min(max(v, 1), 65535)


def main():
    values = [phi_q16(i - Z_LIMIT * (1 << GRID_FRAC_BITS)) for i in range(N)]
    raw = b"".join(v.to_bytes(2, "little") for v in values)
    digest = hashlib.sha256(raw).hexdigest()

    lines = [
        '"""Fixed-point standard-normal CDF table (generated, do not edit).',
        "",
        "769 Q16 values of Phi(z) on the Q6 grid z = -6.00 ... +6.00,",
        "generated by tools/gen_phi_table.py from a 50-digit erf oracle.",
        '"""',
        "",
        f"GRID_FRAC_BITS = {GRID_FRAC_BITS}",
        f"Z_LIMIT = {Z_LIMIT}",
        f'TABLE_SHA256 = "{digest}"',
        "",
        "PHI_TABLE_Q16 = (",
    ]
    for i in range(0, N, 10):
        chunk = ", ".join(str(v) for v in values[i : i + 10])
        lines.append(f"    {chunk},")
    lines.append(")")
    lines.append("")

    out = pathlib.Path(__file__).resolve().parents[1] / "src" / "detq" / "phi_table.py"
    out.write_text("\n".join(lines))
    print(f"wrote {out} ({N} entries, sha256 {digest})")


if __name__ == "__main__":
    main()
