"""The three-stage construction: project to a line, select payload integers
per bucket, extract the stored label by bit manipulation.

Stage 1 projects the d-dimensional points to nonnegative reals with pairwise
gaps of at least 2, using a truncated random direction verified exactly.
Stage 2 packs the floors of the projected points and their labels into one
pair of big integers per bucket and selects the right pair with interval
indicators.  Stage 3 walks the payload's fixed-width bit blocks with two
iterated-triangle tracks, gates each block value against the input with a
distance gate, and emits the matching label block.

Everything is verified with exact arithmetic: the assembled network is only
returned after every training point evaluates to its label exactly.
"""

from __future__ import annotations

import math
import os
import random
from dataclasses import dataclass, field
from fractions import Fraction

from . import bounds
from .exactnum import DyadicRational, bit_len, ceil_log2, ceil_sqrt, pack_blocks
from .gadgets import ParameterError
from .netir import LayeredNet, TapeBuilder, compose_serial, eval_exact, metrics

__all__ = [
    "DuplicatePointError",
    "LabelRangeError",
    "ProjectionSearchExhausted",
    "MemorizationError",
    "Dataset",
    "Projection1D",
    "CraftedCode",
    "PipelineConfig",
    "load_and_validate",
    "dataset_from_csv",
    "dataset_from_json",
    "project_to_line",
    "projected_values",
    "default_bucket_count",
    "craft_codes",
    "build_stage2",
    "build_stage3",
    "assemble_sqrt",
    "regression_wrap",
    "verify_exact",
]

DEFAULT_RETRY_BUDGET = 200


class DuplicatePointError(ValueError):
    """Two input points coincide; separation is impossible."""


class LabelRangeError(ValueError):
    """A label is not an integer in 1..C."""


class ProjectionSearchExhausted(RuntimeError):
    """No sampled direction passed exact verification within the budget."""


class MemorizationError(AssertionError):
    """Internal check failed: a constructed network missed a training point."""


# ---------------------------------------------------------------------------
# dataset


@dataclass(frozen=True)
class Dataset:
    """N exact rational points with integer labels in 1..C.

    delta_sq is the exact minimum pairwise squared distance (None when
    N == 1), r_sq the exact maximum squared norm; both are recomputed by
    exhaustive sweep at load time.
    """

    points: tuple
    labels: tuple
    num_classes: int
    delta_sq: Fraction | None
    r_sq: Fraction

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return len(self.points[0])

    def to_json(self) -> dict:
        return {
            "points": [[str(c) for c in p] for p in self.points],
            "labels": list(self.labels),
            "C": self.num_classes,
        }


def _to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, DyadicRational):
        return value.as_fraction()
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"coordinates must be exact (int/str/Fraction), got {type(value)!r}")


def load_and_validate(raw_points, raw_labels, num_classes: int | None = None) -> Dataset:
    """Parse, then verify separation and norms by exhaustive exact sweep."""
    points = tuple(tuple(_to_fraction(c) for c in p) for p in raw_points)
    if not points:
        raise ValueError("dataset is empty")
    d = len(points[0])
    if d < 1 or any(len(p) != d for p in points):
        raise ValueError("points must share a positive dimension")
    labels = []
    for y in raw_labels:
        if isinstance(y, bool) or not isinstance(y, int):
            raise LabelRangeError(f"label {y!r} is not an integer")
        labels.append(y)
    if len(labels) != len(points):
        raise ValueError("points and labels differ in length")
    c = num_classes if num_classes is not None else max(labels)
    for y in labels:
        if not 1 <= y <= c:
            raise LabelRangeError(f"label {y} outside 1..{c}")
    r_sq = max(sum(x * x for x in p) for p in points)
    delta_sq = None
    n = len(points)
    for i in range(n):
        pi = points[i]
        for j in range(i + 1, n):
            pj = points[j]
            dist = sum((a - b) * (a - b) for a, b in zip(pi, pj))
            if dist == 0:
                raise DuplicatePointError(f"points {i} and {j} coincide")
            if delta_sq is None or dist < delta_sq:
                delta_sq = dist
    return Dataset(points, tuple(labels), c, delta_sq, r_sq)


def dataset_from_csv(path, num_classes: int | None = None,
                     regression: bool = False):
    """CSV with columns x1..xd,label; coordinates are exact decimal strings.

    With regression=True the label column is parsed as an exact rational and
    the raw (points, labels) pair is returned instead of a Dataset.
    """
    import csv

    points = []
    labels = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header and header[-1].strip().lower() != "label":
            raise ValueError("last CSV column must be 'label'")
        for row in reader:
            if not row:
                continue
            points.append([cell.strip() for cell in row[:-1]])
            labels.append(row[-1].strip())
    if regression:
        return [tuple(Fraction(c) for c in p) for p in points], [Fraction(v) for v in labels]
    return load_and_validate(points, [int(v) for v in labels], num_classes)


def dataset_from_json(obj, num_classes: int | None = None) -> Dataset:
    return load_and_validate(obj["points"], obj["labels"],
                             num_classes if num_classes is not None else obj.get("C"))


def load_dataset(path, num_classes: int | None = None,
                 regression: bool = False):
    """Dispatch on extension: .json dataset files, CSV otherwise."""
    if str(path).endswith(".json"):
        import json

        with open(path) as fh:
            obj = json.load(fh)
        if regression:
            points = [tuple(_to_fraction(c) for c in p) for p in obj["points"]]
            return points, [_to_fraction(y) for y in obj["labels"]]
        return dataset_from_json(obj, num_classes)
    return dataset_from_csv(path, num_classes, regression)


# ---------------------------------------------------------------------------
# stage 1: projection


@dataclass(frozen=True)
class Projection1D:
    """Verified 1-D embedding z = scale * (direction . x + bias).

    All projected training values are nonnegative, pairwise at least 2
    apart, and at most R_realized; every property is checked exactly before
    the projection is accepted.
    """

    direction: tuple
    bias: DyadicRational
    scale: DyadicRational
    R_realized: Fraction
    attempts: int = 1


def _truncated_unit_vector(coords: list[int], frac_bits: int) -> list[DyadicRational]:
    """coords/|coords| with each coordinate truncated toward zero to frac_bits."""
    norm_sq = sum(v * v for v in coords)
    out = []
    for v in coords:
        a = abs(v) << frac_bits
        q = math.isqrt((a * a) // norm_sq)
        out.append(DyadicRational(q if v >= 0 else -q, -frac_bits))
    return out


def project_to_line(ds: Dataset, seed: int = 0,
                    retry_budget: int | None = None) -> tuple[Projection1D, LayeredNet]:
    """Search directions until the projected gaps verify, then scale.

    A direction is accepted when all projections are distinct and the
    smallest gap is at least 2*delta/(N^2*sqrt(3d)) (checked exactly on
    squares), which caps R_realized below the audit ceiling.  The scale is
    the smallest power of two making every gap at least 2.
    """
    if retry_budget is None:
        retry_budget = int(os.environ.get("MEMNET_RETRY_BUDGET", DEFAULT_RETRY_BUDGET))
    n, d = ds.n, ds.dim
    frac_bits = ceil_log2(2 * d * n * n) + 2
    rng = random.Random(seed)
    gap_floor_sq = None
    if ds.delta_sq is not None:
        # gap^2 >= 4*delta^2 / (3*d*N^4), with 3 < pi as a rational guard
        gap_floor_sq = Fraction(4, 3 * d * n ** 4) * ds.delta_sq

    for attempt in range(1, retry_budget + 1):
        coords = [rng.randint(-(1 << frac_bits), 1 << frac_bits) for _ in range(d)]
        if all(v == 0 for v in coords):
            continue
        direction = _truncated_unit_vector(coords, frac_bits)
        dir_fr = [u.as_fraction() for u in direction]
        proj = [sum(u * x for u, x in zip(dir_fr, p)) for p in ds.points]
        if n > 1:
            ordered = sorted(proj)
            gaps = [b - a for a, b in zip(ordered, ordered[1:])]
            min_gap = min(gaps)
            if min_gap == 0 or (gap_floor_sq is not None
                                and min_gap * min_gap < gap_floor_sq):
                continue
            scale_exp = max(0, ceil_log2(Fraction(2) / min_gap))
        else:
            scale_exp = 0
        scale = DyadicRational.pow2(scale_exp)
        low = min(proj)
        bias_int = 1 - min(0, low.numerator // low.denominator)
        bias = DyadicRational(bias_int)
        zs = [scale.as_fraction() * (p + bias_int) for p in proj]
        assert all(z > 0 for z in zs)
        if n > 1:
            zs_sorted = sorted(zs)
            assert all(b - a >= 2 for a, b in zip(zs_sorted, zs_sorted[1:]))
        proj1d = Projection1D(tuple(direction), bias, scale, max(zs), attempt)
        t = TapeBuilder([f"x{k}" for k in range(d)])
        t.layer([("h", bias, {f"x{k}": direction[k] for k in range(d)})])
        t.layer([("z", 0, {"h": scale})], relu=False)
        net = t.build("line_projection", output_nonneg=True)
        return proj1d, net
    raise ProjectionSearchExhausted(
        f"no separating direction found in {retry_budget} attempts")


def projected_values(proj: Projection1D, ds: Dataset) -> list[Fraction]:
    dir_fr = [u.as_fraction() for u in proj.direction]
    s = proj.scale.as_fraction()
    b = proj.bias.as_fraction()
    return [s * (sum(u * x for u, x in zip(dir_fr, p)) + b) for p in ds.points]


# ---------------------------------------------------------------------------
# stage 2: payload crafting and bucket selection


@dataclass(frozen=True)
class CraftedCode:
    """Per-bucket payload integers and their block geometry.

    u[j] stores the floors of bucket j's projected points in rho-bit blocks
    (block 0 most significant); w[j] stores the labels in c-bit blocks.
    Partial buckets are filled with sentinel floors above every real floor
    so the block-gap precondition of the extraction stage always holds.
    """

    bucket_count: int
    bucket_size: int
    rho: int
    c: int
    u: tuple
    w: tuple
    sentinels: tuple
    intervals: tuple  # (a_j, b_j) indicator plateau per bucket
    block_values: tuple  # per bucket: floors incl. sentinels
    label_blocks: tuple


def default_bucket_count(n: int) -> int:
    """ceil(sqrt(n * log2 n)) buckets of roughly sqrt(n / log2 n) points."""
    return ceil_sqrt(n * max(1, ceil_log2(n) if n > 1 else 1))


def craft_codes(z_sorted, labels_sorted, m: int, num_classes: int,
                sentinel_base: int | None = None) -> CraftedCode:
    """Pack floors and labels into per-bucket integers.

    z_sorted must be strictly increasing with gaps >= 2 (so floors differ by
    >= 2 as well).  sentinel_base overrides the largest floor used for
    sentinel placement, letting several code sets share one sentinel band.
    """
    n = len(z_sorted)
    if n == 0:
        raise ParameterError("cannot craft codes for an empty sequence")
    if not 1 <= m <= n:
        raise ParameterError(f"bucket count {m} outside 1..{n}")
    floors = [z.floor() if isinstance(z, DyadicRational)
              else z.numerator // z.denominator for z in z_sorted]
    for a, b in zip(floors, floors[1:]):
        if b - a < 2:
            raise ParameterError("projected floors are not 2-separated")
    if floors and floors[0] < 0:
        raise ParameterError("projected values must be nonnegative")
    k = -(-n // m)  # bucket size, ceil
    m_real = -(-n // k)
    base = max(floors) if sentinel_base is None else max(sentinel_base, max(floors))
    missing = m_real * k - n
    sentinels = tuple(base + 2 * (t + 1) for t in range(missing))
    block_values = []
    label_blocks = []
    intervals = []
    for j in range(m_real):
        lo = j * k
        hi = min((j + 1) * k, n)
        blocks = list(floors[lo:hi])
        labels = list(labels_sorted[lo:hi])
        pad = k - len(blocks)
        if pad:
            blocks += list(sentinels[:pad])
            labels += [0] * pad
        block_values.append(tuple(blocks))
        label_blocks.append(tuple(labels))
        intervals.append((floors[lo], floors[hi - 1] + 1))
    all_blocks = [v for bucket in block_values for v in bucket]
    rho = max(1, bit_len(max(all_blocks)))
    c = max(1, bit_len(num_classes))
    u = tuple(pack_blocks(list(bucket), rho) for bucket in block_values)
    w = tuple(pack_blocks(list(bucket), c) for bucket in label_blocks)
    return CraftedCode(m_real, k, rho, c, u, w, sentinels,
                       tuple(intervals), tuple(block_values), tuple(label_blocks))


def build_stage2(code: CraftedCode, carry: int = 0) -> LayeredNet:
    """Bucket selector: z -> (z, w_j, u_j) for z in bucket j's plateau.

    One shared interval indicator gates both payload accumulators, so the
    realized width is 5 (the scalar selector of the contract is width 4)
    plus any carry channels.  Depth is 3*bucket_count + 2.
    """
    carries = [f"k{t}" for t in range(carry)]
    t = TapeBuilder(["z"] + carries)
    t.layer([("x", 0, {"z": 1}), ("yw", 0, {}), ("yu", 0, {})]
            + t.passthrough_rows(carries),
            passthrough=["x"] + carries)
    keep = ["x", "yw", "yu"] + carries
    for j in range(code.bucket_count):
        a, b = code.intervals[j]
        t.layer([("h1", 2 * a, {"x": -2}), ("h2", -2 * b, {"x": 2})]
                + t.passthrough_rows(keep), passthrough=keep)
        t.layer([("g1", 1, {"h1": -1}), ("g2", 1, {"h2": -1})]
                + t.passthrough_rows(keep), passthrough=keep)
        t.layer([
            ("x", 0, {"x": 1}),
            ("yw", -code.w[j], {"yw": 1, "g1": code.w[j], "g2": code.w[j]}),
            ("yu", -code.u[j], {"yu": 1, "g1": code.u[j], "g2": code.u[j]}),
        ] + t.passthrough_rows(carries), passthrough=["x"] + carries)
    t.layer(t.passthrough_rows(keep), relu=False)
    return t.build(f"bucket_selector[m={code.bucket_count}]", output_nonneg=True)


def build_stage3(n_blocks: int, rho: int, c: int, carry: int = 0,
                 merge_carry: bool = False) -> LayeredNet:
    """Block matcher: (x, w, u) -> label block of w whose u block equals floor(x).

    Walks the n_blocks rho-bit blocks of u and c-bit blocks of w with two
    iterated-triangle tracks each, gates every decoded u block against x
    with a distance gate, and accumulates the gated w blocks.  Output is 0
    when x is farther than 3/2 from every block value.  Width 12; depth
    3*n_blocks*max(rho, c) + 2*n_blocks + 2.

    With merge_carry=True the net maps (x, w, u, y) -> (x, y + result),
    which is how the bit-budget chain threads its accumulator.
    """
    if n_blocks < 1 or rho < 1 or c < 1:
        raise ParameterError("block counts and widths must be positive")
    if merge_carry and carry != 1:
        raise ParameterError("merge_carry needs exactly one carry channel")
    carries = [f"k{t}" for t in range(carry)]
    nr = n_blocks * rho
    nc = n_blocks * c
    steps = max(rho, c)
    t = TapeBuilder(["x", "w", "u"] + carries)
    t.layer([
        ("x", 0, {"x": 1}),
        ("pu", DyadicRational(1, -(nr + 1)), {"u": DyadicRational(1, -nr)}),
        ("qu", DyadicRational(1, -(nr + 2)), {"u": DyadicRational(1, -nr)}),
        ("pw", DyadicRational(1, -(nc + 1)), {"w": DyadicRational(1, -nc)}),
        ("qw", DyadicRational(1, -(nc + 2)), {"w": DyadicRational(1, -nc)}),
        ("y", 0, {}),
    ] + t.passthrough_rows(carries), passthrough=["x"] + carries)

    def track_rows(prefix, active):
        if active:
            return [
                (f"h{prefix}1", 0, {f"p{prefix}": 2}),
                (f"h{prefix}2", -2, {f"p{prefix}": 4}),
                (f"h{prefix}3", 0, {f"q{prefix}": 2}),
                (f"h{prefix}4", -2, {f"q{prefix}": 4}),
            ]
        return [(f"p{prefix}", 0, {f"p{prefix}": 1}), (f"q{prefix}", 0, {f"q{prefix}": 1})]

    for blk in range(n_blocks):
        y_in = {"y": 1, "g": 1} if blk else {"y": 1}
        for step in range(1, steps + 1):
            act_u = step <= rho
            act_w = step <= c
            # L1: halve/shift both tracks
            rows = [("x", 0, {"x": 1})]
            rows += track_rows("u", act_u)
            rows += track_rows("w", act_w)
            if step > 1:
                rows += [("bu", 0, {"bu": 1}), ("bw", 0, {"bw": 1})]
            rows += [("y", 0, y_in if step == 1 else {"y": 1})]
            rows += t.passthrough_rows(carries)
            t.layer(rows, passthrough=["x"] + carries)
            # L2: fold into triangle values and bit taps
            rows = [("x", 0, {"x": 1})]
            if act_u:
                rows += [
                    ("pu", 0, {"hu1": 1, "hu2": -1}),
                    ("qu", 0, {"hu3": 1, "hu4": -1}),
                    ("tu", 0, {"hu3": 1, "hu4": -1, "hu1": -1, "hu2": 1}),
                ]
            else:
                rows += [("pu", 0, {"pu": 1}), ("qu", 0, {"qu": 1})]
            if act_w:
                rows += [
                    ("pw", 0, {"hw1": 1, "hw2": -1}),
                    ("qw", 0, {"hw3": 1, "hw4": -1}),
                    ("tw", 0, {"hw3": 1, "hw4": -1, "hw1": -1, "hw2": 1}),
                ]
            else:
                rows += [("pw", 0, {"pw": 1}), ("qw", 0, {"qw": 1})]
            if step > 1:
                rows += [("bu", 0, {"bu": 1}), ("bw", 0, {"bw": 1})]
            rows += [("y", 0, {"y": 1})]
            rows += t.passthrough_rows(carries)
            t.layer(rows, passthrough=["x"] + carries)
            # L3: advance accumulators; on the last step fuse in the gate taps
            bu_expr = {}
            if step > 1:
                bu_expr["bu"] = 1
            if act_u:
                bu_expr["tu"] = DyadicRational(1, (rho - step) + (nr + 2 - (blk * rho + step)))
            bw_expr = {}
            if step > 1:
                bw_expr["bw"] = 1
            if act_w:
                bw_expr["tw"] = DyadicRational(1, (c - step) + (nc + 2 - (blk * c + step)))
            rows = [("x", 0, {"x": 1}),
                    ("pu", 0, {"pu": 1}), ("qu", 0, {"qu": 1}),
                    ("pw", 0, {"pw": 1}), ("qw", 0, {"qw": 1}),
                    ("y", 0, {"y": 1})]
            if step < steps:
                rows += [("bu", 0, bu_expr), ("bw", 0, bw_expr)]
            else:
                # distance gate layer 1, with the final bu folded in
                d1 = {src: 2 * wt for src, wt in bu_expr.items()}
                d1["x"] = d1.get("x", 0) - 2
                d2 = {src: -2 * wt for src, wt in bu_expr.items()}
                d2["x"] = d2.get("x", 0) + 2
                rows += [("bw", 0, bw_expr), ("d1", 0, d1), ("d2", -2, d2)]
            rows += t.passthrough_rows(carries)
            t.layer(rows, passthrough=["x"] + carries)
        hold = ["x", "pu", "qu", "pw", "qw", "y"] + carries
        t.layer([("e1", 1, {"d1": -1}), ("e2", 1, {"d2": -1}), ("bw", 0, {"bw": 1})]
                + t.passthrough_rows(hold), passthrough=["x", "bw"] + carries)
        gate_scale = DyadicRational(1, c + 1)
        t.layer([("g", -gate_scale.mul_pow2(1),
                  {"e1": gate_scale, "e2": gate_scale, "bw": 1})]
                + t.passthrough_rows(hold), passthrough=["x"] + carries)
    if merge_carry:
        final = [("x", 0, {"x": 1}),
                 ("y", 0, {carries[0]: 1, "y": 1, "g": 1})]
    else:
        final = [("out", 0, {"y": 1, "g": 1})]
    t.layer(final, relu=False)
    return t.build(f"block_matcher[n={n_blocks},rho={rho},c={c}]", output_nonneg=True)


# ---------------------------------------------------------------------------
# assembly


@dataclass
class PipelineConfig:
    seed: int = 0
    bucket_count: int | None = None
    retry_budget: int | None = None
    epsilon: Fraction | None = None


@dataclass
class BuildInfo:
    """Realized construction quantities, serialized next to the network."""

    theorem: str
    n: int
    dim: int
    num_classes: int
    seed: int
    rho: int = 0
    c: int = 0
    bucket_count: int = 0
    bucket_size: int = 0
    R_realized: Fraction = Fraction(0)
    delta_sq: Fraction | None = None
    r_sq: Fraction = Fraction(0)
    L: int | None = None
    B: int | None = None
    subnet_count: int | None = None
    epsilon: Fraction | None = None
    label_lo: Fraction | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        def fr(v):
            return None if v is None else str(v)

        out = {
            "theorem": self.theorem, "N": self.n, "d": self.dim,
            "C": self.num_classes, "seed": self.seed, "rho": self.rho,
            "c": self.c, "bucket_count": self.bucket_count,
            "bucket_size": self.bucket_size, "R_realized": fr(self.R_realized),
            "delta_sq": fr(self.delta_sq), "r_sq": fr(self.r_sq),
        }
        if self.L is not None:
            out["L"] = self.L
        if self.B is not None:
            out["B"] = self.B
        if self.subnet_count is not None:
            out["subnet_count"] = self.subnet_count
        if self.epsilon is not None:
            out["epsilon"] = fr(self.epsilon)
            out["label_lo"] = fr(self.label_lo)
        out.update(self.extra)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "BuildInfo":
        def fr(key):
            v = obj.get(key)
            return None if v is None else Fraction(v)

        known = {"theorem", "N", "d", "C", "seed", "rho", "c", "bucket_count",
                 "bucket_size", "R_realized", "delta_sq", "r_sq", "L", "B",
                 "subnet_count", "epsilon", "label_lo"}
        return cls(
            theorem=obj["theorem"], n=obj["N"], dim=obj["d"], num_classes=obj["C"],
            seed=obj.get("seed", 0), rho=obj.get("rho", 0), c=obj.get("c", 0),
            bucket_count=obj.get("bucket_count", 0),
            bucket_size=obj.get("bucket_size", 0),
            R_realized=fr("R_realized") or Fraction(0),
            delta_sq=fr("delta_sq"), r_sq=fr("r_sq") or Fraction(0),
            L=obj.get("L"), B=obj.get("B"), subnet_count=obj.get("subnet_count"),
            epsilon=fr("epsilon"), label_lo=fr("label_lo"),
            extra={k: v for k, v in obj.items() if k not in known},
        )


def verify_exact(net: LayeredNet, points, labels, debug: bool = False):
    """Evaluate every point exactly; return (all_equal, mismatched indices)."""
    bad = []
    for idx, (p, y) in enumerate(zip(points, labels)):
        out = eval_exact(net, list(p), debug=debug)
        if out[0] != y:
            bad.append(idx)
    return not bad, bad


def _sorted_projection(ds: Dataset, config: PipelineConfig):
    proj, net1 = project_to_line(ds, config.seed, config.retry_budget)
    zs = projected_values(proj, ds)
    order = sorted(range(ds.n), key=lambda i: zs[i])
    z_sorted = [zs[i] for i in order]
    labels_sorted = [ds.labels[i] for i in order]
    return proj, net1, z_sorted, labels_sorted


def assemble_sqrt(ds: Dataset, config: PipelineConfig | None = None):
    """Build and exactly verify the square-root-size memorizer.

    Returns (net, audit_report); raises MemorizationError if any training
    point fails exact verification (which would indicate a bug, not data).
    """
    config = config or PipelineConfig()
    proj, net1, z_sorted, labels_sorted = _sorted_projection(ds, config)
    m = config.bucket_count or min(ds.n, default_bucket_count(ds.n))
    code = craft_codes(z_sorted, labels_sorted, m, ds.num_classes)
    net2 = build_stage2(code)
    net3 = build_stage3(code.bucket_size, code.rho, code.c)
    net = compose_serial(compose_serial(net1, net2), net3, "sqrt_memorizer")
    ok, bad = verify_exact(net, ds.points, ds.labels)
    if not ok:
        raise MemorizationError(f"training points {bad[:5]} not reproduced")
    info = BuildInfo(
        theorem="sqrt", n=ds.n, dim=ds.dim, num_classes=ds.num_classes,
        seed=config.seed, rho=code.rho, c=code.c,
        bucket_count=code.bucket_count, bucket_size=code.bucket_size,
        R_realized=proj.R_realized, delta_sq=ds.delta_sq, r_sq=ds.r_sq,
        extra={"stage_widths": [metrics(net1).width, metrics(net2).width,
                                metrics(net3).width]},
    )
    report = bounds.audit(net, ds, "sqrt", info)
    return net, report


def regression_wrap(raw_points, raw_labels, epsilon,
                    config: PipelineConfig | None = None,
                    lo=None, hi=None):
    """Quantize real labels to a grid of width epsilon and memorize the bins.

    The returned network satisfies |F(x_i) - y_i| <= epsilon/2 exactly; the
    class count grows like (hi-lo)/epsilon so parameters grow with
    log(1/epsilon).  lo/hi declare the label interval and default to the
    observed extremes.
    """
    config = config or PipelineConfig()
    epsilon = _to_fraction(epsilon)
    if epsilon <= 0:
        raise ParameterError("epsilon must be positive")
    labels = [_to_fraction(y) for y in raw_labels]
    lo = min(labels) if lo is None else _to_fraction(lo)
    hi = max(labels) if hi is None else _to_fraction(hi)
    if any(not lo <= y <= hi for y in labels):
        raise ParameterError("labels fall outside the declared interval")
    span = hi - lo
    classes = max(1, math.ceil(span / epsilon))
    quantized = []
    for y in labels:
        q = min(classes - 1, (y - lo) // epsilon)
        quantized.append(int(q) + 1)
    ds = load_and_validate(raw_points, quantized, classes)
    base, base_report = assemble_sqrt(ds, config)
    # class q maps back to the grid midpoint lo + (q - 1/2) * epsilon
    head = _dyadic_head(epsilon, lo - epsilon / 2)
    net = compose_serial(base, head, "regression_memorizer")
    worst = Fraction(0)
    for p, y in zip(ds.points, labels):
        out = eval_exact(net, list(p))[0]
        out_fr = out if isinstance(out, Fraction) else out.as_fraction()
        worst = max(worst, abs(out_fr - y))
    if worst > epsilon / 2:
        raise MemorizationError(f"regression error {worst} exceeds epsilon/2")
    base_info = base_report.info
    info = BuildInfo(
        theorem="regression", n=ds.n, dim=ds.dim, num_classes=classes,
        seed=config.seed, epsilon=epsilon, label_lo=lo,
        rho=base_info.rho, c=base_info.c,
        bucket_count=base_info.bucket_count, bucket_size=base_info.bucket_size,
        R_realized=base_info.R_realized, delta_sq=ds.delta_sq, r_sq=ds.r_sq,
        extra={"max_abs_error": str(worst)},
    )
    expected = [lo + Fraction(2 * q - 1, 2) * epsilon for q in ds.labels]
    report = bounds.audit(net, ds, "regression", info, expected=expected)
    return net, report


def _dyadic_head(epsilon: Fraction, bias: Fraction) -> LayeredNet:
    t = TapeBuilder(["q"])
    weight = DyadicRational.from_fraction(epsilon) if _is_dyadic(epsilon) else epsilon
    bias_v = DyadicRational.from_fraction(bias) if _is_dyadic(bias) else bias
    if not (isinstance(weight, DyadicRational) and isinstance(bias_v, DyadicRational)):
        raise ParameterError("epsilon and label range must be dyadic rationals")
    t.layer([("y", bias_v, {"q": weight})], relu=False)
    return t.build("grid_midpoint_head")


def _is_dyadic(fr: Fraction) -> bool:
    den = fr.denominator
    return not (den & (den - 1))
