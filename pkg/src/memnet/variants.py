"""Depth-budget and bit-budget memorizers built from the core stages.

Both variants share one projection, split the sorted projected points into
contiguous subsets, and run the bucket-selector / block-matcher pair per
subset.  A subset's network outputs exactly 0 on every point outside the
subset (its selector emits a zero payload there, and a zero label block is
gated to zero), so the depth variant can sum parallel subnetworks and the
bit variant can chain additive blocks without interference.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import bounds
from .exactnum import ZERO, ceil_sqrt
from .gadgets import ParameterError
from .netir import (AffineLayer, LayeredNet, TapeBuilder, compose_serial,
                    stack_parallel)
from .pipeline import (BuildInfo, Dataset, PipelineConfig, build_stage2,
                       build_stage3, craft_codes, default_bucket_count,
                       project_to_line, projected_values, verify_exact,
                       MemorizationError)

__all__ = [
    "VariantConfig",
    "assemble_bounded_depth",
    "assemble_bounded_bits",
]


@dataclass(frozen=True)
class VariantConfig:
    """Budget selector: subsets of size L^2 (depth mode) or B^2 (bit mode)."""

    mode: str
    budget: int
    n: int

    def __post_init__(self):
        if self.mode not in ("bounded_depth", "bounded_bits"):
            raise ParameterError(f"unknown variant mode {self.mode!r}")
        limit = ceil_sqrt(self.n)
        if not 1 <= self.budget <= limit:
            raise ParameterError(
                f"budget {self.budget} outside 1..ceil(sqrt(N))={limit}")

    @property
    def subset_size(self) -> int:
        return self.budget * self.budget


def _subset_codes(ds: Dataset, z_sorted, labels_sorted, subset_size: int,
                  config: PipelineConfig):
    """Contiguous subsets with a shared sentinel band above every floor."""
    n = ds.n
    global_max_floor = max(z.numerator // z.denominator for z in z_sorted)
    codes = []
    for lo in range(0, n, subset_size):
        hi = min(lo + subset_size, n)
        size = hi - lo
        m = config.bucket_count or min(size, default_bucket_count(size))
        codes.append(craft_codes(z_sorted[lo:hi], labels_sorted[lo:hi],
                                 min(m, size), ds.num_classes,
                                 sentinel_base=global_max_floor))
    return codes


def _sorted_projection(ds: Dataset, config: PipelineConfig):
    proj, net1 = project_to_line(ds, config.seed, config.retry_budget)
    zs = projected_values(proj, ds)
    order = sorted(range(ds.n), key=lambda i: zs[i])
    return proj, net1, [zs[i] for i in order], [ds.labels[i] for i in order]


def _with_zero_outputs(net: LayeredNet, extra: int) -> LayeredNet:
    """Append constant-zero output channels to the final affine layer."""
    last = net.layers[-1]
    new_last = AffineLayer(last.in_dim, last.out_dim + extra,
                           last.rows + ((),) * extra,
                           last.biases + (ZERO,) * extra,
                           relu=False, passthrough=last.passthrough)
    return LayeredNet(net.input_dim, net.layers[:-1] + (new_last,),
                      net.provenance, net.output_nonneg)


def assemble_bounded_depth(ds: Dataset, L: int,
                           config: PipelineConfig | None = None):
    """Parallel subset memorizers under a summation head.

    ceil(N/L^2) subsets of L^2 points each become independent width-12
    chains stacked side by side behind the shared projection; every training
    point activates exactly one of them.
    """
    config = config or PipelineConfig()
    VariantConfig("bounded_depth", L, ds.n)
    proj, net1, z_sorted, labels_sorted = _sorted_projection(ds, config)
    codes = _subset_codes(ds, z_sorted, labels_sorted, L * L, config)
    subnets = [
        compose_serial(build_stage2(code),
                       build_stage3(code.bucket_size, code.rho, code.c))
        for code in codes
    ]
    stacked = stack_parallel(subnets, "subset_memorizers")
    head = TapeBuilder([f"o{k}" for k in range(len(subnets))])
    head.layer([("y", 0, {f"o{k}": 1 for k in range(len(subnets))})], relu=False)
    net = compose_serial(compose_serial(net1, stacked),
                         head.build("sum_head", output_nonneg=True),
                         f"depth_budget_memorizer[L={L}]")
    ok, bad = verify_exact(net, ds.points, ds.labels)
    if not ok:
        raise MemorizationError(f"training points {bad[:5]} not reproduced")
    info = BuildInfo(
        theorem="bounded_depth", n=ds.n, dim=ds.dim, num_classes=ds.num_classes,
        seed=config.seed, rho=max(c.rho for c in codes), c=codes[0].c,
        bucket_count=max(c.bucket_count for c in codes),
        bucket_size=max(c.bucket_size for c in codes),
        R_realized=proj.R_realized, delta_sq=ds.delta_sq, r_sq=ds.r_sq,
        L=L, subnet_count=len(codes),
        extra={"subset_sizes": [len(c.block_values) * c.bucket_size
                                - len(c.sentinels) for c in codes]},
    )
    report = bounds.audit(net, ds, "bounded_depth", info)
    return net, report


def assemble_bounded_bits(ds: Dataset, B: int,
                          config: PipelineConfig | None = None):
    """Sequential subset memorizers threading one label accumulator.

    Each block maps (x, y) to (x, y + out_k(x)); out_k is the subset's
    memorizer, zero off-subset.  Payload integers only cover B^2 points, so
    every weight stays within the bit budget while depth grows with N/B^2.
    """
    config = config or PipelineConfig()
    VariantConfig("bounded_bits", B, ds.n)
    proj, net1, z_sorted, labels_sorted = _sorted_projection(ds, config)
    codes = _subset_codes(ds, z_sorted, labels_sorted, B * B, config)
    net = _with_zero_outputs(net1, 1)
    for code in codes:
        block = compose_serial(
            build_stage2(code, carry=1),
            build_stage3(code.bucket_size, code.rho, code.c,
                         carry=1, merge_carry=True))
        net = compose_serial(net, block)
    tail = TapeBuilder(["x", "y"])
    tail.layer([("out", 0, {"y": 1})], relu=False)
    net = compose_serial(net, tail.build("accumulator_readout", output_nonneg=True),
                         f"bit_budget_memorizer[B={B}]")
    ok, bad = verify_exact(net, ds.points, ds.labels, debug=True)
    if not ok:
        raise MemorizationError(f"training points {bad[:5]} not reproduced")
    info = BuildInfo(
        theorem="bounded_bits", n=ds.n, dim=ds.dim, num_classes=ds.num_classes,
        seed=config.seed, rho=max(c.rho for c in codes), c=codes[0].c,
        bucket_count=max(c.bucket_count for c in codes),
        bucket_size=max(c.bucket_size for c in codes),
        R_realized=proj.R_realized, delta_sq=ds.delta_sq, r_sq=ds.r_sq,
        B=B, subnet_count=len(codes),
    )
    report = bounds.audit(net, ds, "bounded_bits", info)
    return net, report
