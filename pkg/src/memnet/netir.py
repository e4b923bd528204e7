"""Explicit layered ReLU network representation with exact evaluators.

A network is a stack of affine layers; every layer but the last applies the
ReLU elementwise.  Weights are sparse rows of DyadicRational, so the
parameter count (number of nonzero weights and biases) is exact and the
block-diagonal zeros created by stacking are free.  Depth counts affine
layers including the final one; width is the largest hidden-layer size.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .exactnum import DyadicRational, ZERO

__all__ = [
    "DimensionError",
    "ContractViolation",
    "AffineLayer",
    "LayeredNet",
    "NetMetrics",
    "metrics",
    "effective_bits",
    "eval_exact",
    "eval_float",
    "compose_serial",
    "stack_parallel",
    "extend_identity",
    "serialize_net",
    "deserialize_net",
    "save_net",
    "load_net",
    "TapeBuilder",
]

FORMAT_VERSION = 1


class DimensionError(ValueError):
    """Input or interface dimensions do not line up."""


class ContractViolation(RuntimeError):
    """A pass-through channel saw a negative value in debug evaluation."""


def _as_dyadic(v) -> DyadicRational:
    if isinstance(v, DyadicRational):
        return v
    if isinstance(v, int):
        return DyadicRational(v, 0)
    raise TypeError(f"weight must be int or DyadicRational, got {type(v)!r}")


class AffineLayer:
    """One affine map with optional ReLU.

    rows[k] is a tuple of (input_index, weight) pairs for output unit k;
    zero weights are never stored.  `passthrough` marks units that are
    plain sigma(identity) channels, checked in debug evaluation.
    """

    __slots__ = ("in_dim", "out_dim", "rows", "biases", "relu", "passthrough")

    def __init__(self, in_dim, out_dim, rows, biases, relu, passthrough=()):
        rows = tuple(
            tuple((int(i), _as_dyadic(w)) for i, w in row if _as_dyadic(w).sign != 0)
            for row in rows
        )
        biases = tuple(_as_dyadic(b) for b in biases)
        if len(rows) != out_dim or len(biases) != out_dim:
            raise DimensionError("row/bias count does not match out_dim")
        for row in rows:
            for i, _ in row:
                if not 0 <= i < in_dim:
                    raise DimensionError(f"column {i} out of range for in_dim {in_dim}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.rows = rows
        self.biases = biases
        self.relu = bool(relu)
        self.passthrough = tuple(passthrough)

    def nonzero_params(self) -> int:
        return sum(len(r) for r in self.rows) + sum(1 for b in self.biases if b.sign)


class LayeredNet:
    """Immutable layer stack.  The final layer never applies ReLU.

    `output_nonneg` is a builder-supplied certificate that the outputs are
    nonnegative on the declared input domain; composition uses it to turn
    the final affine layer into a genuine ReLU layer without changing the
    computed function on that domain.
    """

    __slots__ = ("input_dim", "layers", "provenance", "output_nonneg",
                 "_fast", "_frac", "_flt")

    def __init__(self, input_dim, layers, provenance="", output_nonneg=False):
        layers = tuple(layers)
        if not layers:
            raise DimensionError("a network needs at least one layer")
        dim = input_dim
        for k, layer in enumerate(layers):
            if layer.in_dim != dim:
                raise DimensionError(f"layer {k} expects {layer.in_dim} inputs, got {dim}")
            dim = layer.out_dim
        if layers[-1].relu:
            raise DimensionError("final layer must be affine (no ReLU)")
        object.__setattr__(self, "input_dim", input_dim)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "provenance", provenance)
        object.__setattr__(self, "output_nonneg", bool(output_nonneg))
        object.__setattr__(self, "_fast", None)
        object.__setattr__(self, "_frac", None)
        object.__setattr__(self, "_flt", None)

    def __setattr__(self, name, value):
        raise AttributeError("LayeredNet is immutable")

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def depth(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class NetMetrics:
    width: int
    depth: int
    params: int
    bits: int
    exponent_range: int

    def to_json(self) -> dict:
        return {
            "width": self.width,
            "depth": self.depth,
            "params": self.params,
            "bits": self.bits,
            "exponent_range": self.exponent_range,
        }


def metrics(net: LayeredNet) -> NetMetrics:
    width = max((l.out_dim for l in net.layers[:-1]), default=0)
    params = sum(l.nonzero_params() for l in net.layers)
    bits = 0
    erange = 0
    for layer in net.layers:
        for row in layer.rows:
            for _, w in row:
                bits = max(bits, w.mantissa.bit_length())
                erange = max(erange, abs(w.exponent))
        for b in layer.biases:
            if b.sign:
                bits = max(bits, b.mantissa.bit_length())
                erange = max(erange, abs(b.exponent))
    return NetMetrics(width, len(net.layers), params, bits, erange)


def effective_bits(net: LayeredNet) -> int:
    """Storage bits of the worst weight: mantissa length plus |exponent|.

    For an integer weight this equals its plain bit length; for a scale
    2**-k it is k+1.  Used by the audit's bit-complexity comparisons.
    """
    worst = 0
    for layer in net.layers:
        values = [w for row in layer.rows for _, w in row]
        values.extend(b for b in layer.biases if b.sign)
        for w in values:
            worst = max(worst, w.mantissa.bit_length() + abs(w.exponent))
    return worst


# ---------------------------------------------------------------------------
# evaluation


def _fast_layers(net: LayeredNet):
    if net._fast is None:
        compiled = []
        for layer in net.layers:
            rows = tuple(
                (
                    layer.biases[k].sign * layer.biases[k].mantissa,
                    layer.biases[k].exponent,
                    tuple((i, w.sign * w.mantissa, w.exponent) for i, w in layer.rows[k]),
                )
                for k in range(layer.out_dim)
            )
            compiled.append((rows, layer.relu, layer.passthrough))
        object.__setattr__(net, "_fast", tuple(compiled))
    return net._fast


def _frac_layers(net: LayeredNet):
    if net._frac is None:
        compiled = []
        for layer in net.layers:
            rows = tuple(
                (
                    layer.biases[k].as_fraction(),
                    tuple((i, w.as_fraction()) for i, w in layer.rows[k]),
                )
                for k in range(layer.out_dim)
            )
            compiled.append((rows, layer.relu, layer.passthrough))
        object.__setattr__(net, "_frac", tuple(compiled))
    return net._frac


def _float_layers(net: LayeredNet):
    if net._flt is None:
        compiled = []
        for layer in net.layers:
            rows = tuple(
                (
                    layer.biases[k].to_float(),
                    tuple((i, w.to_float()) for i, w in layer.rows[k]),
                )
                for k in range(layer.out_dim)
            )
            compiled.append((rows, layer.relu))
        object.__setattr__(net, "_flt", tuple(compiled))
    return net._flt


def eval_exact(net: LayeredNet, xs: Sequence, debug: bool = False) -> list:
    """Exact forward pass; no rounding anywhere.

    Accepts DyadicRational/int inputs (dyadic fast path, dyadic outputs) or
    Fraction inputs (exact rational path, Fraction outputs).  Fractions
    whose denominator is a power of two ride the fast path.  With
    debug=True, pass-through channels are checked to stay nonnegative.
    """
    if len(xs) != net.input_dim:
        raise DimensionError(f"expected {net.input_dim} inputs, got {len(xs)}")
    vals = []
    for x in xs:
        if isinstance(x, Fraction):
            den = x.denominator
            if den & (den - 1):
                return _eval_fraction(net, xs, debug)
            vals.append((x.numerator, -(den.bit_length() - 1)))
        else:
            d = _as_dyadic(x)
            vals.append((d.sign * d.mantissa, d.exponent))
    for rows, relu, passthrough in _fast_layers(net):
        out = []
        guard = frozenset(passthrough) if debug else ()
        for k, (bias_n, bias_e, terms) in enumerate(rows):
            acc_n, acc_e = bias_n, bias_e
            for i, w_n, w_e in terms:
                x_n, x_e = vals[i]
                if not x_n:
                    continue
                t_n = w_n * x_n
                t_e = w_e + x_e
                if not acc_n:
                    acc_n, acc_e = t_n, t_e
                elif acc_e >= t_e:
                    acc_n = (acc_n << (acc_e - t_e)) + t_n
                    acc_e = t_e
                else:
                    acc_n += t_n << (t_e - acc_e)
            if relu and acc_n < 0:
                if k in guard:
                    raise ContractViolation(f"pass-through unit {k} went negative")
                acc_n, acc_e = 0, 0
            out.append((acc_n, acc_e))
        vals = out
    return [DyadicRational(n, e) for n, e in vals]


def _eval_fraction(net: LayeredNet, xs: Sequence, debug: bool) -> list:
    vals = [x if isinstance(x, Fraction) else _as_dyadic(x).as_fraction() for x in xs]
    zero = Fraction(0)
    for rows, relu, passthrough in _frac_layers(net):
        out = []
        guard = frozenset(passthrough) if debug else ()
        for k, (bias, terms) in enumerate(rows):
            acc = bias
            for i, w in terms:
                acc += w * vals[i]
            if relu and acc < 0:
                if k in guard:
                    raise ContractViolation(f"pass-through unit {k} went negative")
                acc = zero
            out.append(acc)
        vals = out
    return vals


def eval_float(net: LayeredNet, xs: Sequence[float]) -> list[float]:
    """Same recursion under IEEE float64 rounding; NaN/Inf propagate."""
    if len(xs) != net.input_dim:
        raise DimensionError(f"expected {net.input_dim} inputs, got {len(xs)}")
    vals = [float(x) for x in xs]
    for rows, relu in _float_layers(net):
        out = []
        for bias, terms in rows:
            acc = bias
            for i, w in terms:
                acc += w * vals[i]
            if relu and not acc > 0.0:
                acc = 0.0 if acc == acc else acc  # keep NaN
            out.append(acc)
        vals = out
    return vals


# ---------------------------------------------------------------------------
# structural combinators


def _relu_seam_layers(a: LayeredNet) -> list[AffineLayer]:
    """a's layers with the final affine turned into a hidden layer."""
    last = a.layers[-1]
    if a.output_nonneg:
        seam = AffineLayer(last.in_dim, last.out_dim, last.rows, last.biases,
                           relu=True, passthrough=last.passthrough)
        return list(a.layers[:-1]) + [seam]
    # No nonnegativity certificate: split every output into sigma(v)-sigma(-v)
    # so the inserted ReLU is exact for all signs.  Width doubles at the seam.
    rows = []
    biases = []
    for k in range(last.out_dim):
        rows.append(last.rows[k])
        biases.append(last.biases[k])
    for k in range(last.out_dim):
        rows.append(tuple((i, -w) for i, w in last.rows[k]))
        biases.append(-last.biases[k])
    seam = AffineLayer(last.in_dim, 2 * last.out_dim, rows, biases, relu=True)
    return list(a.layers[:-1]) + [seam]


def compose_serial(a: LayeredNet, b: LayeredNet, provenance: str = "") -> LayeredNet:
    """Network computing b(a(x)); depth adds exactly.

    a's final affine layer becomes a hidden ReLU layer.  When a certifies
    nonnegative outputs this is the identity on the declared domain;
    otherwise the seam is sign-split so the result is exact everywhere.
    """
    if b.input_dim != a.output_dim:
        raise DimensionError(
            f"cannot compose: {a.output_dim} outputs into {b.input_dim} inputs")
    head = _relu_seam_layers(a)
    seam_dim = head[-1].out_dim
    tail = list(b.layers)
    if seam_dim != b.input_dim:
        # sign-split seam: rewire b's first layer to consume (v+, v-)
        first = tail[0]
        half = b.input_dim
        rows = tuple(
            tuple((i, w) for i, w in row) + tuple((i + half, -w) for i, w in row)
            for row in first.rows
        )
        tail[0] = AffineLayer(seam_dim, first.out_dim, rows, first.biases,
                              first.relu, first.passthrough)
    return LayeredNet(
        a.input_dim,
        head + tail,
        provenance or f"({a.provenance}>>{b.provenance})",
        output_nonneg=b.output_nonneg,
    )


def _identity_layer(dim: int, relu: bool) -> AffineLayer:
    rows = tuple(((i, 1),) for i in range(dim))
    return AffineLayer(dim, dim, rows, (0,) * dim, relu, passthrough=tuple(range(dim)))


def _padded_layers(net: LayeredNet, depth: int) -> list[AffineLayer]:
    """net's layers padded with identity layers to the requested depth.

    Padding appends sigma(identity) layers after the (now hidden) final
    affine; valid only for nets certifying nonnegative outputs.
    """
    extra = depth - len(net.layers)
    if extra == 0:
        return list(net.layers)
    if not net.output_nonneg:
        raise ContractViolation(
            "cannot pad a net without a nonnegative-output certificate")
    layers = _relu_seam_layers(net)
    dim = layers[-1].out_dim
    for k in range(extra):
        layers.append(_identity_layer(dim, relu=(k < extra - 1)))
    return layers


def stack_parallel(nets: Sequence[LayeredNet], provenance: str = "") -> LayeredNet:
    """Evaluate member nets side by side on a shared input.

    Outputs are concatenated; cross-member weights are zero and never
    stored, so parameter counts add exactly.  Shorter members are padded
    with nonnegative identity layers.
    """
    nets = list(nets)
    if not nets:
        raise DimensionError("stack_parallel needs at least one net")
    input_dim = nets[0].input_dim
    for net in nets:
        if net.input_dim != input_dim:
            raise DimensionError("stacked nets must share input_dim")
    depth = max(len(net.layers) for net in nets)
    columns = [_padded_layers(net, depth) for net in nets]
    stacked = []
    for k in range(depth):
        parts = [col[k] for col in columns]
        relu = parts[0].relu
        if any(p.relu != relu for p in parts):
            raise DimensionError("stacked nets disagree on ReLU at aligned layers")
        rows = []
        biases = []
        passthrough = []
        offset_in = 0
        offset_out = 0
        for p in parts:
            shift = 0 if k == 0 else offset_in
            for row in p.rows:
                rows.append(tuple((i + shift, w) for i, w in row))
            biases.extend(p.biases)
            passthrough.extend(u + offset_out for u in p.passthrough)
            offset_in += p.in_dim
            offset_out += p.out_dim
        in_dim = input_dim if k == 0 else offset_in
        stacked.append(AffineLayer(in_dim, offset_out, rows, biases, relu, passthrough))
    return LayeredNet(
        input_dim,
        stacked,
        provenance or "stack(" + ",".join(n.provenance for n in nets) + ")",
        output_nonneg=all(n.output_nonneg for n in nets),
    )


def extend_identity(net: LayeredNet, extra_channels: int, side: str = "append") -> LayeredNet:
    """Thread extra pass-through channels alongside every layer of net.

    The new channels must carry nonnegative values (sigma acts as the
    identity on them); debug evaluation enforces this.  One weight per
    channel per layer is added.
    """
    if extra_channels < 0:
        raise ValueError("extra_channels must be nonnegative")
    if extra_channels == 0:
        return net
    if side not in ("prepend", "append"):
        raise ValueError("side must be 'prepend' or 'append'")
    new_layers = []
    for layer in net.layers:
        if side == "append":
            shift = 0
            carry_src = layer.in_dim
            rows = [row for row in layer.rows]
            biases = list(layer.biases)
            passthrough = list(layer.passthrough)
            for c in range(extra_channels):
                rows.append(((carry_src + c, 1),))
                biases.append(0)
                passthrough.append(layer.out_dim + c)
        else:
            shift = extra_channels
            rows = [((c, 1),) for c in range(extra_channels)]
            biases = [0] * extra_channels
            passthrough = list(range(extra_channels))
            rows += [tuple((i + shift, w) for i, w in row) for row in layer.rows]
            biases += list(layer.biases)
            passthrough += [u + extra_channels for u in layer.passthrough]
        if side == "append":
            rows = [tuple((i, w) for i, w in row) for row in rows]
        new_layers.append(
            AffineLayer(layer.in_dim + extra_channels, layer.out_dim + extra_channels,
                        rows, biases, layer.relu, passthrough))
    return LayeredNet(
        net.input_dim + extra_channels,
        new_layers,
        f"{net.provenance}+{extra_channels}ch",
        output_nonneg=net.output_nonneg,
    )


# ---------------------------------------------------------------------------
# serialization (bit-exact; no floats in the file)

_DENSE_WIDTH_LIMIT = 16


def serialize_net(net: LayeredNet, builder: dict | None = None) -> dict:
    """JSON-ready dict.  Dense weight rows up to width 16, sparse beyond.

    Sparse rows are lists of [column, dyadic] pairs; see docs/FORMATS.md.
    """
    layers = []
    for layer in net.layers:
        dense = max(layer.in_dim, layer.out_dim) <= _DENSE_WIDTH_LIMIT
        if dense:
            w = []
            for row in layer.rows:
                dense_row = [ZERO.to_json() for _ in range(layer.in_dim)]
                for i, wt in row:
                    dense_row[i] = wt.to_json()
                w.append(dense_row)
        else:
            w = {"sparse": [[[i, wt.to_json()] for i, wt in row] for row in layer.rows],
                 "in_dim": layer.in_dim}
        layers.append({
            "w": w,
            "b": [b.to_json() for b in layer.biases],
            "relu": layer.relu,
            "passthrough": list(layer.passthrough),
        })
    out = {
        "format_version": FORMAT_VERSION,
        "input_dim": net.input_dim,
        "provenance": net.provenance,
        "output_nonneg": net.output_nonneg,
        "layers": layers,
        "metrics": metrics(net).to_json(),
    }
    if builder is not None:
        out["builder"] = builder
    return out


def deserialize_net(obj: dict) -> LayeredNet:
    if obj.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported network format: {obj.get('format_version')!r}")
    layers = []
    for spec in obj["layers"]:
        biases = [DyadicRational.from_json(b) for b in spec["b"]]
        w = spec["w"]
        if isinstance(w, dict):
            in_dim = int(w["in_dim"])
            rows = [
                tuple((int(i), DyadicRational.from_json(wt)) for i, wt in row)
                for row in w["sparse"]
            ]
        else:
            in_dim = len(w[0]) if w else 0
            rows = [
                tuple((i, DyadicRational.from_json(wt)) for i, wt in enumerate(row)
                      if wt["s"] != 0)
                for row in w
            ]
        layers.append(AffineLayer(in_dim, len(biases), rows, biases,
                                  spec["relu"], tuple(spec.get("passthrough", ()))))
    return LayeredNet(obj["input_dim"], layers, obj.get("provenance", ""),
                      obj.get("output_nonneg", False))


def net_to_json_bytes(net: LayeredNet, builder: dict | None = None) -> bytes:
    payload = serialize_net(net, builder)
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()


def save_net(net: LayeredNet, path, builder: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(net_to_json_bytes(net, builder))
        fh.write(b"\n")


def load_net(path) -> tuple[LayeredNet, dict | None]:
    with open(path, "rb") as fh:
        obj = json.loads(fh.read())
    return deserialize_net(obj), obj.get("builder")


# ---------------------------------------------------------------------------
# layer-by-layer builder over named channels


class TapeBuilder:
    """Builds a LayeredNet from named-channel affine rows.

    Each emitted layer is a list of (name, bias, {source_name: coeff})
    triples; sources must name channels of the previous layer.  Keeps the
    fiddly index bookkeeping of the wide constructions out of the builders.
    """

    def __init__(self, input_names: Iterable[str]):
        self.names = list(input_names)
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate input channel names")
        self.input_dim = len(self.names)
        self.layers: list[AffineLayer] = []

    def layer(self, rows, relu=True, passthrough=()):
        index = {name: i for i, name in enumerate(self.names)}
        out_rows = []
        biases = []
        new_names = []
        for name, bias, terms in rows:
            row = []
            for src, coeff in terms.items():
                if src not in index:
                    raise KeyError(f"unknown source channel {src!r}")
                row.append((index[src], coeff))
            out_rows.append(tuple(row))
            biases.append(bias)
            new_names.append(name)
        if len(set(new_names)) != len(new_names):
            raise ValueError("duplicate output channel names")
        pt = tuple(new_names.index(p) for p in passthrough)
        self.layers.append(
            AffineLayer(len(self.names), len(out_rows), out_rows, biases, relu, pt))
        self.names = new_names

    def passthrough_rows(self, names):
        """Identity rows for channels that survive this layer unchanged."""
        return [(n, 0, {n: 1}) for n in names]

    def build(self, provenance: str, output_nonneg: bool = False) -> LayeredNet:
        return LayeredNet(self.input_dim, self.layers, provenance, output_nonneg)
