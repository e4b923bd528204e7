"""Verified ReLU building blocks: triangle, indicator, distance gate, bit extractor.

Each gadget comes in two forms: a scalar defining formula (the oracle) and a
LayeredNet built from it.  Oracles and networks are compared exhaustively on
small instances; the networks are what the construction pipeline composes.

Depth convention: depth counts affine layers including the final affine
readout.  The indicator and distance gate therefore realize depth 3 (two
ReLU layers plus the readout); inside a larger composition their readout
fuses with the consumer's first affine layer, contributing 2 layers, which
is the figure their contracts quote.
"""

from __future__ import annotations

from fractions import Fraction

from .exactnum import DyadicRational, bit_len, bin_range
from .netir import LayeredNet, TapeBuilder

__all__ = [
    "ParameterError",
    "triangle_value",
    "triangle_iterate",
    "build_triangle",
    "indicator_value",
    "build_indicator",
    "distance_value",
    "build_distance_gate",
    "extractor_track_inputs",
    "bin_bit_formula",
    "build_bit_extractor",
    "oracle_triangle",
    "oracle_indicator",
    "oracle_distance",
    "oracle_bits",
    "oracle_stage3",
]


class ParameterError(ValueError):
    """Gadget parameters violate the construction's preconditions."""


def _relu(v):
    zero = Fraction(0) if isinstance(v, Fraction) else DyadicRational(0)
    return v if v > zero else zero


# ---------------------------------------------------------------------------
# triangle function


def triangle_value(z):
    """sigma(sigma(2z) - sigma(4z - 2)): the unit triangle with peak at 1/2."""
    two_z = z + z
    four_z = two_z + two_z
    return _relu(_relu(two_z) - _relu(four_z - 2))


def triangle_iterate(z, k: int):
    """k-fold composition of the triangle function."""
    for _ in range(k):
        z = triangle_value(z)
    return z


def build_triangle() -> LayeredNet:
    """Two-layer, width-2 net computing the triangle function on [0, 1].

    The readout omits the outermost sigma (it is the identity on [0, 1]);
    serial composition restores it, so iterated triangles are exact on all
    of R.
    """
    t = TapeBuilder(["z"])
    t.layer([("h1", 0, {"z": 2}), ("h2", -2, {"z": 4})])
    t.layer([("phi", 0, {"h1": 1, "h2": -1})], relu=False)
    return t.build("triangle", output_nonneg=True)


# ---------------------------------------------------------------------------
# interval indicator and distance gate


def indicator_value(a: int, b: int, x):
    """sigma(1 - sigma(2a - 2x)) + sigma(1 - sigma(2x - 2b)) - 1."""
    return _relu(1 - _relu(2 * a - x - x)) + _relu(1 - _relu(x + x - 2 * b)) - 1


def build_indicator(a: int, b: int) -> LayeredNet:
    """Net with F(x)=1 on [a,b], 0 outside (a-1/2, b+1/2), values in [0,1]."""
    if a >= b:
        raise ParameterError(f"indicator needs a < b, got a={a}, b={b}")
    t = TapeBuilder(["x"])
    t.layer([("h1", 2 * a, {"x": -2}), ("h2", -2 * b, {"x": 2})])
    t.layer([("g1", 1, {"h1": -1}), ("g2", 1, {"h2": -1})])
    t.layer([("f", -1, {"g1": 1, "g2": 1})], relu=False)
    return t.build(f"indicator[{a},{b}]", output_nonneg=True)


def distance_value(x, y):
    """1 when x is in [y, y+1], 0 beyond margins of 1/2; the block selector."""
    return _relu(1 - _relu(y + y - x - x)) + _relu(1 - _relu(x + x - y - y - 2)) - 1


def build_distance_gate() -> LayeredNet:
    """Net on (x, y) firing 1 for x in [y, y+1], 0 past the 1/2 margins."""
    t = TapeBuilder(["x", "y"])
    t.layer([("h1", 0, {"y": 2, "x": -2}), ("h2", -2, {"x": 2, "y": -2})])
    t.layer([("g1", 1, {"h1": -1}), ("g2", 1, {"h2": -1})])
    t.layer([("f", -1, {"g1": 1, "g2": 1})], relu=False)
    return t.build("distance_gate", output_nonneg=True)


# ---------------------------------------------------------------------------
# bit extraction


def extractor_track_inputs(x: int, n: int, i: int) -> tuple[DyadicRational, DyadicRational]:
    """The two triangle-track values expected by a bit extractor at stage i.

    Returns (phi^(i-1)(x/2^n + 1/2^(n+1)), phi^(i-1)(x/2^n + 1/2^(n+2))).
    """
    base_p = DyadicRational((x << 2) + 2, -(n + 2))
    base_q = DyadicRational((x << 2) + 1, -(n + 2))
    return triangle_iterate(base_p, i - 1), triangle_iterate(base_q, i - 1)


def bin_bit_formula(x: int, n: int, i: int) -> int:
    """Bit i of x (width-n, MSB-first) via the iterated-triangle identity.

    bit_i = 2^(n+2-i) * sigma(phi^(i)(x/2^n + 1/2^(n+2)) - phi^(i)(x/2^n + 1/2^(n+1)))
    """
    if not 1 <= i <= n:
        raise IndexError(f"bit index {i} out of range for width {n}")
    if bit_len(x) > n:
        raise OverflowError(f"{x} does not fit in {n} bits")
    p, q = extractor_track_inputs(x, n, i + 1)  # phi^(i) of both offsets
    bit = _relu(q - p).mul_pow2(n + 2 - i)
    return bit.as_int()


def build_bit_extractor(n: int, i: int, j: int) -> LayeredNet:
    """Net advancing both triangle tracks from stage i-1 to stage j while
    summing the tapped bits.

    Input (phi^(i-1)(x/2^n + 1/2^(n+1)), phi^(i-1)(x/2^n + 1/2^(n+2)));
    output (phi^(j) of both, bin_range(x, i, j, n)).  Depth 3(j-i+1),
    width at most 5; all weights are signed powers of two.
    """
    if i < 1 or i > j or j > n:
        raise IndexError(f"bit range {i}:{j} out of range for width {n}")
    c = j - i
    t = TapeBuilder(["p", "q"])
    for step in range(c + 1):
        k = i + step  # global bit tapped by this block
        have_y = step > 0
        carry = ["y"] if have_y else []
        t.layer([
            ("hp1", 0, {"p": 2}), ("hp2", -2, {"p": 4}),
            ("hq1", 0, {"q": 2}), ("hq2", -2, {"q": 4}),
        ] + t.passthrough_rows(carry), passthrough=carry)
        t.layer([
            ("p", 0, {"hp1": 1, "hp2": -1}),
            ("q", 0, {"hq1": 1, "hq2": -1}),
            ("t", 0, {"hq1": 1, "hq2": -1, "hp1": -1, "hp2": 1}),
        ] + t.passthrough_rows(carry), passthrough=carry)
        tap = DyadicRational(1, (c - step) + (n + 2 - k))
        y_terms = {"t": tap}
        if have_y:
            y_terms["y"] = 1
        last = step == c
        t.layer(
            [("p", 0, {"p": 1}), ("q", 0, {"q": 1}), ("y", 0, y_terms)],
            relu=not last,
            passthrough=() if last else ("p", "q"),
        )
    return t.build(f"bit_extractor[n={n},{i}:{j}]", output_nonneg=True)


# ---------------------------------------------------------------------------
# exhaustive oracles


def _grid(lo: Fraction, hi: Fraction, step: Fraction):
    x = lo
    while x <= hi:
        yield x
        x += step


def oracle_triangle(max_iter: int = 6, grid_halving: int = 6) -> dict:
    """Composed triangle nets vs the scalar formula on dyadic grids of [0,1]."""
    from .netir import compose_serial, eval_exact

    checks = 0
    witnesses = []
    net = build_triangle()
    for k in range(1, max_iter + 1):
        grid = [DyadicRational(t, -grid_halving) for t in range((1 << grid_halving) + 1)]
        for z in grid:
            got = eval_exact(net, [z])[0]
            want = triangle_iterate(z, k)
            checks += 1
            if got != want:
                witnesses.append({"suite": "triangle", "k": k, "z": str(z),
                                  "got": str(got), "want": str(want)})
        net = compose_serial(net, build_triangle())
    return {"suite": "triangle", "checks": checks, "mismatches": witnesses,
            "pass": not witnesses}


def oracle_indicator(pairs=((2, 5), (0, 1), (7, 19)), step=Fraction(1, 4)) -> dict:
    """Indicator nets vs formula and contract on grids over [a-3, b+3]."""
    from .netir import eval_exact

    checks = 0
    witnesses = []
    for a, b in pairs:
        net = build_indicator(a, b)
        for x in _grid(Fraction(a - 3), Fraction(b + 3), step):
            got = eval_exact(net, [x])[0]
            want = indicator_value(a, b, x)
            ok = got == want and 0 <= got <= 1
            if a <= x <= b:
                ok = ok and got == 1
            if x > Fraction(2 * b + 1, 2) or x < Fraction(2 * a - 1, 2):
                ok = ok and got == 0
            checks += 1
            if not ok:
                witnesses.append({"suite": "indicator", "a": a, "b": b, "x": str(x),
                                  "got": str(got), "want": str(want)})
    return {"suite": "indicator", "checks": checks, "mismatches": witnesses,
            "pass": not witnesses}


def oracle_distance(y_values=(0, 3, 10), step=Fraction(1, 4)) -> dict:
    """Distance gate vs formula and contract on 2-D grids around each y."""
    from .netir import eval_exact

    checks = 0
    witnesses = []
    net = build_distance_gate()
    for y in y_values:
        for x in _grid(Fraction(y - 3), Fraction(y + 4), step):
            got = eval_exact(net, [x, Fraction(y)])[0]
            want = distance_value(x, Fraction(y))
            ok = got == want and 0 <= got <= 1
            if Fraction(y) <= x <= Fraction(y + 1):
                ok = ok and got == 1
            if x > Fraction(2 * y + 3, 2) or x < Fraction(2 * y - 1, 2):
                ok = ok and got == 0
            checks += 1
            if not ok:
                witnesses.append({"suite": "distance", "y": y, "x": str(x),
                                  "got": str(got), "want": str(want)})
    return {"suite": "distance", "checks": checks, "mismatches": witnesses,
            "pass": not witnesses}


def oracle_bits(n_max: int = 10, builder=None, formula=None) -> dict:
    """Exhaustive check of extractor nets against brute-force bit slicing.

    For all n <= n_max, all x < 2^n, all 1 <= i <= j <= n, the network's
    third output must equal bin_range(x, i, j, n) exactly.  The single-bit
    formula is swept on the same domain.
    """
    from .netir import eval_exact

    if n_max > 14:
        raise ParameterError("n_max above 14 would take too long; refusing")
    build = builder or build_bit_extractor
    single = formula or bin_bit_formula
    checks = 0
    witnesses = []
    for n in range(1, n_max + 1):
        for i in range(1, n + 1):
            for x in range(1 << n):
                got = single(x, n, i)
                want = bin_range(x, i, i, n)
                checks += 1
                if got != want:
                    witnesses.append({"suite": "bits", "kind": "formula", "n": n,
                                      "i": i, "x": x, "got": got, "want": want})
        for i in range(1, n + 1):
            for j in range(i, n + 1):
                net = build(n, i, j)
                for x in range(1 << n):
                    p, q = extractor_track_inputs(x, n, i)
                    out = eval_exact(net, [p, q])
                    want_tracks = extractor_track_inputs(x, n, j + 1)
                    want_bits = bin_range(x, i, j, n)
                    checks += 1
                    ok = (out[2] == want_bits and out[0] == want_tracks[0]
                          and out[1] == want_tracks[1])
                    if not ok:
                        witnesses.append({
                            "suite": "bits", "kind": "net", "n": n, "i": i, "j": j,
                            "x": x, "got": str(out[2]), "want": want_bits})
                        if len(witnesses) > 20:
                            return {"suite": "bits", "checks": checks,
                                    "mismatches": witnesses, "pass": False}
    return {"suite": "bits", "checks": checks, "mismatches": witnesses,
            "pass": not witnesses}


def oracle_stage3(seed: int = 0, trials: int = 12) -> dict:
    """Random small block-matcher instances vs direct block lookup.

    Builds payload integers from pairwise-separated block values, then checks
    the matcher net returns the paired label block at gated inputs and exact
    zero far from every block value.
    """
    import random

    from .exactnum import pack_blocks
    from .netir import eval_exact
    from .pipeline import build_stage3

    rng = random.Random(seed)
    checks = 0
    witnesses = []
    for _ in range(trials):
        rho = rng.randint(2, 4)
        c = rng.randint(1, 3)
        # pairwise >= 2 apart block values, each fitting in rho bits
        pool = list(range(0, 1 << rho, 2))
        n = rng.randint(1, min(3, len(pool)))
        rng.shuffle(pool)
        blocks = sorted(pool[:n])
        labels = [rng.randrange(1 << c) for _ in range(n)]
        u = pack_blocks(blocks, rho)
        w = pack_blocks(labels, c)
        net = build_stage3(n, rho, c)
        for t, blk in enumerate(blocks):
            for off in (Fraction(0), Fraction(1, 4), Fraction(1)):
                got = eval_exact(net, [Fraction(blk) + off, Fraction(w), Fraction(u)])[0]
                checks += 1
                if got != labels[t]:
                    witnesses.append({"suite": "stage3", "n": n, "rho": rho, "c": c,
                                      "x": str(Fraction(blk) + off),
                                      "got": str(got), "want": labels[t]})
        far = max(blocks) + 2
        for x in (Fraction(far), Fraction(4 * far + 7, 4)):
            if any(abs(x - blk) < Fraction(3, 2) for blk in blocks):
                continue
            got = eval_exact(net, [x, Fraction(w), Fraction(u)])[0]
            checks += 1
            if got != 0:
                witnesses.append({"suite": "stage3", "n": n, "rho": rho, "c": c,
                                  "x": str(x), "got": str(got), "want": 0})
    return {"suite": "stage3", "checks": checks, "mismatches": witnesses,
            "pass": not witnesses}
