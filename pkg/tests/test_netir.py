import json
import math
import random
from fractions import Fraction

import pytest

from memnet.exactnum import DyadicRational
from memnet.gadgets import build_triangle, build_indicator, triangle_iterate
from memnet.netir import (AffineLayer, ContractViolation, DimensionError,
                          LayeredNet, TapeBuilder, compose_serial,
                          deserialize_net, effective_bits, eval_exact,
                          eval_float, extend_identity, metrics, serialize_net,
                          stack_parallel)


def identity_net(dim=1):
    t = TapeBuilder([f"x{k}" for k in range(dim)])
    t.layer([(f"x{k}", 0, {f"x{k}": 1}) for k in range(dim)], relu=False)
    return t.build("identity", output_nonneg=False)


class TestEval:
    def test_identity(self):
        net = identity_net()
        assert eval_exact(net, [DyadicRational(3, -1)])[0] == DyadicRational(3, -1)
        assert eval_float(net, [1.5]) == [1.5]

    def test_triangle_quarter(self):
        net = build_triangle()
        assert eval_exact(net, [DyadicRational(1, -2)])[0] == DyadicRational(1, -1)
        assert eval_float(net, [0.25]) == [0.5]

    def test_fraction_path_matches_dyadic_path(self):
        net = build_indicator(2, 5)
        for num in range(-8, 40):
            d = eval_exact(net, [DyadicRational(num, -2)])[0]
            f = eval_exact(net, [Fraction(3 * num, 12)])[0]
            assert d.as_fraction() == (f if isinstance(f, Fraction) else f.as_fraction())

    def test_summation_order_invariant(self):
        rng = random.Random(5)
        terms = {f"x{k}": DyadicRational(rng.randint(-9, 9), rng.randint(-4, 4))
                 for k in range(6)}
        xs = [DyadicRational(rng.randint(-9, 9), rng.randint(-4, 4)) for _ in range(6)]
        results = []
        for _ in range(4):
            items = list(terms.items())
            rng.shuffle(items)
            t = TapeBuilder([f"x{k}" for k in range(6)])
            t.layer([("y", 0, dict(items))], relu=False)
            results.append(eval_exact(t.build("sum"), xs)[0])
        assert all(r == results[0] for r in results)

    def test_dimension_error(self):
        with pytest.raises(DimensionError):
            eval_exact(identity_net(), [1, 2])

    def test_float_diverges_on_wide_mantissa(self):
        # a weight with a 100-bit mantissa cannot survive float64 rounding
        wide = DyadicRational((1 << 100) + 1, 0)
        t = TapeBuilder(["x"])
        t.layer([("y", 0, {"x": wide})], relu=False)
        net = t.build("wide")
        exact = eval_exact(net, [1])[0]
        approx = eval_float(net, [1.0])[0]
        assert approx != exact.as_fraction()

    def test_float_inf_propagates(self):
        t = TapeBuilder(["x"])
        t.layer([("y", 0, {"x": DyadicRational(1, 3000)})], relu=False)
        net = t.build("huge")
        assert math.isinf(eval_float(net, [1.0])[0])


class TestCompose:
    def test_identity_compose(self):
        net = compose_serial(build_indicator(2, 5), identity_net())
        for x in (2, 5, 7):
            assert eval_exact(net, [x])[0] == \
                eval_exact(build_indicator(2, 5), [x])[0]

    def test_depth_adds_exactly(self):
        a, b = build_triangle(), build_triangle()
        net = compose_serial(a, b)
        assert net.depth == a.depth + b.depth

    def test_triangle_iteration(self):
        net = build_triangle()
        for k in range(2, 5):
            net = compose_serial(net, build_triangle())
            for num in range(0, 33):
                z = DyadicRational(num, -5)
                assert eval_exact(net, [z])[0] == triangle_iterate(z, k)

    def test_matches_sequential_evaluation(self):
        a = build_indicator(2, 5)
        t = TapeBuilder(["v"])
        t.layer([("y", 1, {"v": 2})], relu=False)
        b = t.build("affine")
        net = compose_serial(a, b)
        for x in (Fraction(9, 4), Fraction(11, 2), 3):
            mid = eval_exact(a, [x])[0]
            assert eval_exact(net, [x])[0] == eval_exact(b, [mid])[0]

    def test_sign_split_seam_is_exact_for_negative_values(self):
        # no nonnegativity certificate: the seam must not clip
        t = TapeBuilder(["x"])
        t.layer([("h", 0, {"x": 1})])
        t.layer([("v", -5, {"h": 1})], relu=False)  # negative on x < 5
        a = t.build("shifted", output_nonneg=False)
        t2 = TapeBuilder(["v"])
        t2.layer([("y", 0, {"v": 3})], relu=False)
        b = t2.build("scale")
        net = compose_serial(a, b)
        assert net.depth == a.depth + b.depth
        assert eval_exact(net, [2])[0] == -9
        assert metrics(net).width == 2  # split doubled the 1-wide seam

    def test_interface_mismatch(self):
        with pytest.raises(DimensionError):
            compose_serial(identity_net(2), identity_net(1))


class TestStack:
    def test_single_member_is_identity_wrapper(self):
        a = build_indicator(2, 5)
        s = stack_parallel([a])
        for x in (1, 3, 6):
            assert eval_exact(s, [x]) == eval_exact(a, [x])

    def test_componentwise_and_width_sum(self):
        a, b = build_indicator(2, 5), build_indicator(10, 12)
        s = stack_parallel([a, b])
        for x in (2, 11, 7):
            assert eval_exact(s, [x]) == [eval_exact(a, [x])[0],
                                          eval_exact(b, [x])[0]]
        assert metrics(s).width == metrics(a).width + metrics(b).width

    def test_params_add_exactly(self):
        a, b = build_indicator(2, 5), build_indicator(10, 12)
        assert metrics(stack_parallel([a, b])).params == \
            metrics(a).params + metrics(b).params

    def test_padding_preserves_function(self):
        deep = compose_serial(build_indicator(2, 5), identity_net())
        shallow = build_indicator(9, 11)
        s = stack_parallel([deep, shallow])
        assert len(s.layers) == deep.depth
        for x in (2, 10, 8):
            assert eval_exact(s, [x]) == [eval_exact(deep, [x])[0],
                                          eval_exact(shallow, [x])[0]]

    def test_input_dim_must_match(self):
        with pytest.raises(DimensionError):
            stack_parallel([identity_net(1), identity_net(2)])


class TestExtendIdentity:
    def test_passthrough_values(self):
        net = extend_identity(build_indicator(2, 5), 1, side="append")
        out = eval_exact(net, [3, DyadicRational(7, -1)])
        assert out == [1, DyadicRational(7, -1)]
        net_pre = extend_identity(build_indicator(2, 5), 1, side="prepend")
        out = eval_exact(net_pre, [DyadicRational(7, -1), 3])
        assert out == [DyadicRational(7, -1), 1]

    def test_one_weight_per_channel_per_layer(self):
        base = build_indicator(2, 5)
        net = extend_identity(base, 2, side="append")
        assert metrics(net).params == metrics(base).params + 2 * base.depth

    def test_negative_passthrough_trips_debug(self):
        net = extend_identity(build_indicator(2, 5), 1, side="append")
        with pytest.raises(ContractViolation):
            eval_exact(net, [3, -1], debug=True)
        with pytest.raises(ContractViolation):
            eval_exact(net, [3, Fraction(-1)], debug=True)


class TestMetricsAndSerialization:
    def test_zero_weights_unstored(self):
        layer = AffineLayer(2, 1, [((0, 1), (1, DyadicRational(0)))], [0], False)
        assert layer.rows == (((0, DyadicRational(1)),),)
        assert layer.nonzero_params() == 1

    def test_effective_bits(self):
        t = TapeBuilder(["x"])
        t.layer([("y", DyadicRational(1, -9), {"x": 6})], relu=False)
        net = t.build("b")
        # 6 = 3 * 2: 2 mantissa bits + exponent 1 = 3; bias 2^-9 gives 10
        assert effective_bits(net) == 10

    def test_round_trip_bit_exact(self):
        net = compose_serial(build_triangle(), build_indicator(3, 9))
        blob = json.dumps(serialize_net(net))
        again = deserialize_net(json.loads(blob))
        rng = random.Random(2)
        for _ in range(25):
            x = DyadicRational(rng.randint(-64, 64), rng.randint(-5, 2))
            assert eval_exact(again, [x]) == eval_exact(net, [x])
        assert metrics(again) == metrics(net)

    def test_sparse_encoding_used_for_wide_nets(self):
        wide = stack_parallel([build_indicator(2 * k + 2, 2 * k + 4)
                               for k in range(9)])
        obj = serialize_net(wide)
        assert any(isinstance(layer["w"], dict) for layer in obj["layers"])
        again = deserialize_net(obj)
        assert eval_exact(again, [5]) == eval_exact(wide, [5])

    def test_final_layer_must_be_affine(self):
        layer = AffineLayer(1, 1, [((0, 1),)], [0], relu=True)
        with pytest.raises(DimensionError):
            LayeredNet(1, [layer], "bad")
