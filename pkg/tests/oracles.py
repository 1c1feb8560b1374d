"""Independent pure-Python oracles used to pin expected values.

Everything here avoids numpy and floating point where possible, working in
Fraction/int arithmetic so the production code is checked against a second,
independently written implementation.
"""

from fractions import Fraction

from detq.phi_table import GRID_FRAC_BITS, PHI_TABLE_Q16, Z_LIMIT

K_MAX = 14


def round_half_away_fr(q: Fraction) -> int:
    """Nearest integer, ties away from zero, exact."""
    if q >= 0:
        return int((2 * q + 1) // 2)
    return -int((2 * -q + 1) // 2)


def ceil_log2_fr(f: Fraction) -> int:
    assert f > 0
    e = 0
    while Fraction(2) ** e < f:
        e += 1
    while Fraction(2) ** (e - 1) >= f:
        e -= 1
    return e


def quantize_value_oracle(x, p, b) -> int:
    lim = (1 << (b - 1)) - 1
    q = round_half_away_fr(Fraction(x) * 2**p)
    return max(-lim, min(lim, q))


def derive_weight_shift_oracle(ws, n_a=32, n_i=16) -> int:
    s = sum(abs(Fraction(float(w))) for w in ws)
    if s == 0:
        return K_MAX
    return max(n_a - n_i - ceil_log2_fr(s), 0)


def adjust_shift_for_bias_oracle(k_j, b_j, p, n_a=32) -> int:
    if b_j == 0:
        return k_j
    lb = max(ceil_log2_fr(abs(Fraction(float(b_j)))), 0)
    return min(n_a - 1 - p - lb, k_j) - 1


def round_shift_oracle(v, s) -> int:
    return round_half_away_fr(Fraction(int(v), 2**s) if s >= 0 else Fraction(int(v)) * 2**-s)


def softmax_oracle(z, p):
    """Exact rational linearized softmax -> positive Q15 triple, total 2^15."""
    n = [max((1 << p) + int(zi), 1) for zi in z]
    d = sum(n)
    target = (1 << 15) - 3
    base = [ni * target // d for ni in n]
    rem = [ni * target % d for ni in n]
    left = target - sum(base)
    for idx in sorted(range(3), key=lambda i: (-rem[i], i))[:left]:
        base[idx] += 1
    return tuple(1 + b for b in base)


def phi_oracle(z_q6: int) -> int:
    span = Z_LIMIT << GRID_FRAC_BITS
    t = max(-span, min(span, int(z_q6))) + span
    return PHI_TABLE_Q16[t]


def div_round_half_away_oracle(num: int, den: int) -> int:
    return round_half_away_fr(Fraction(int(num), int(den)))


def mixture_cdf_oracle(t_fp, weights, means, scales) -> int:
    acc = 0
    for w, mu, sg in zip(weights, means, scales):
        z = div_round_half_away_oracle((int(t_fp) - int(mu)) << GRID_FRAC_BITS, int(sg))
        acc += int(w) * phi_oracle(z)
    # round() on a Fraction is round-half-to-even, matching the pipeline
    return round(Fraction(acc, 1 << 15))


def cdf_table_oracle(weights, means, scales, scale_exp, v_min, v_max):
    """Independent integer reimplementation of the table builder."""
    total = 1 << 16
    s = v_max - v_min + 1
    half = 1 << (scale_exp - 1)
    cum = [
        mixture_cdf_oracle((v << scale_exp) - half, weights, means, scales)
        for v in range(v_min, v_max + 2)
    ]
    cum[0] = 0
    cum[-1] = total
    raw = [cum[i + 1] - cum[i] for i in range(s)]
    target = total - s
    tot = sum(raw)
    base = [r * target // tot for r in raw]
    rem = [r * target % tot for r in raw]
    left = target - sum(base)
    for idx in sorted(range(s), key=lambda i: (-rem[i], i))[:left]:
        base[idx] += 1
    freq = [1 + b for b in base]
    cf = [0]
    for f in freq:
        cf.append(cf[-1] + f)
    return cf


def conv2d_oracle(x, weights, bias):
    """Naive zero-padded cross-correlation; x (c,h,w), weights (m,K,K,n)."""
    c, h, w = len(x), len(x[0]), len(x[0][0])
    m, kk, _, n = (
        len(weights),
        len(weights[0]),
        len(weights[0][0]),
        len(weights[0][0][0]),
    )
    assert m == c
    r = kk // 2
    out = [[[bias[j] for _ in range(w)] for _ in range(h)] for j in range(n)]
    for j in range(n):
        for y in range(h):
            for xx in range(w):
                for i in range(c):
                    for dy in range(kk):
                        for dx in range(kk):
                            yy, xs = y + dy - r, xx + dx - r
                            if 0 <= yy < h and 0 <= xs < w:
                                out[j][y][xx] += x[i][yy][xs] * weights[i][dy][dx][j]
    return out
