"""Operator-level properties, composition sampling statistics, and the
paired-view contract."""

import numpy as np
import pytest

from mastlab import augment
from mastlab.errors import ContractError, DomainError


def random_image(seed=0, side=32):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, size=(3, side, side)).astype(np.float32)


class TestOperatorRegistry:
    def test_exactly_nineteen_ops(self):
        assert len(augment.OPS) == 19

    def test_set_sizes(self):
        assert len(augment.MAST5_OPS) == 5
        assert len(augment.MAST15_OPS) == 15
        assert len(augment.MAST19_OPS) == 19

    def test_standard_five_come_first(self):
        assert augment.MAST5_OPS == [
            "ColorJitter",
            "GaussianBlur",
            "RandomFlip",
            "RandomGrayscale",
            "RandomResizedCrop",
        ]

    def test_optional_four_are_the_tail(self):
        assert augment.OP_ORDER[15:] == ["Solarize", "Equalize", "Posterize", "MotionBlur"]


class TestApplyContract:
    def test_flip_is_involution(self):
        img = random_image(1)
        once = augment.apply("RandomFlip", {}, img)
        twice = augment.apply("RandomFlip", {}, once)
        np.testing.assert_array_equal(twice, img)

    def test_invert_definition(self):
        img = random_image(2)
        out = augment.apply("Invert", {}, img)
        np.testing.assert_allclose(out, 1.0 - img, atol=1e-7)

    def test_blur_sigma_zero_limit_is_identity(self):
        img = random_image(3)
        out = augment.apply("GaussianBlur", {"magnitude": 1e-6}, img)
        assert np.max(np.abs(out - img)) < 1e-4

    def test_out_of_range_magnitude_rejected(self):
        with pytest.raises(DomainError):
            augment.apply("GaussianBlur", {"magnitude": 100.0}, random_image())
        with pytest.raises(DomainError):
            augment.apply("RandomResizedCrop", augment.deterministic_params("RandomResizedCrop", 0.0), random_image())

    def test_output_in_unit_range_and_same_shape(self):
        img = random_image(4)
        rng = np.random.default_rng(0)
        for op_id in augment.OP_ORDER:
            params = augment.draw_params(op_id, rng)
            out = augment.apply(op_id, params, img)
            assert out.shape == img.shape, op_id
            assert out.min() >= 0.0 and out.max() <= 1.0, op_id

    def test_inputs_never_mutated(self):
        img = random_image(5)
        ref = img.copy()
        rng = np.random.default_rng(1)
        for op_id in augment.OP_ORDER:
            augment.apply(op_id, augment.draw_params(op_id, rng), img)
        np.testing.assert_array_equal(img, ref)

    def test_geometry_ops_preserve_extents(self):
        img = np.random.default_rng(6).uniform(size=(3, 24, 40)).astype(np.float32)
        for op_id in ["ShearX", "ShearY", "TranslateX", "TranslateY", "Rotate", "RandomResizedCrop"]:
            params = augment.deterministic_params(op_id, augment.OPS[op_id].magnitude_range[1] * 0.5)
            assert augment.apply(op_id, params, img).shape == img.shape

    def test_value_preserving_ops(self):
        img = random_image(7)
        for op_id, m in [("Solarize", 0.5), ("Equalize", 1.0), ("Posterize", 4.0), ("Invert", 1.0)]:
            out = augment.apply(op_id, augment.deterministic_params(op_id, m), img)
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_sobel_nonnegative(self):
        out = augment.apply("SobelFilter", {}, random_image(8))
        assert out.min() >= 0.0

    def test_identity_magnitudes(self):
        img = random_image(9)
        cases = [
            ("ColorJitter", 0.0),
            ("RandomResizedCrop", 1.0),
            ("ShearX", 0.0),
            ("ShearY", 0.0),
            ("TranslateX", 0.0),
            ("TranslateY", 0.0),
            ("Rotate", 0.0),
            ("Sharpness", 1.0),
            ("GaussianNoise", 0.0),
            ("Cutout", 0.0),
        ]
        for op_id, m in cases:
            out = augment.apply(op_id, augment.deterministic_params(op_id, m), img)
            np.testing.assert_allclose(out, img, atol=1e-5, err_msg=op_id)

    def test_batch_matches_per_image(self):
        imgs = np.stack([random_image(s) for s in range(4)])
        rng = np.random.default_rng(11)
        for op_id in augment.OP_ORDER:
            params = augment.draw_params(op_id, rng)
            batched = augment.apply(op_id, params, imgs)
            single = np.stack([augment.apply(op_id, params, imgs[i]) for i in range(4)])
            np.testing.assert_allclose(batched, single, atol=1e-6, err_msg=op_id)


class TestCompositionSampling:
    def test_k_one_selects_exactly_one(self):
        plan = augment.sample_composition(np.random.default_rng(0), augment.MAST5_OPS, 1)
        assert plan.k == 1

    def test_k_equals_all(self):
        plan = augment.sample_composition(np.random.default_rng(0), augment.MAST5_OPS, 5)
        assert plan.selected_ops == augment.MAST5_OPS

    def test_k_too_large_rejected(self):
        with pytest.raises(ContractError):
            augment.sample_composition(np.random.default_rng(0), augment.MAST5_OPS, 6)

    def test_uniform_selection_frequencies(self):
        # 10000 single-op draws over 5 ops: each expected 2000 +- 200.
        rng = np.random.default_rng(42)
        counts = {op: 0 for op in augment.MAST5_OPS}
        for _ in range(10000):
            plan = augment.sample_composition(rng, augment.MAST5_OPS, 1)
            counts[plan.selected_ops[0]] += 1
        for op, c in counts.items():
            assert abs(c - 2000) <= 200, (op, c)

    def test_selected_ops_in_canonical_order(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            plan = augment.sample_composition(rng, augment.MAST15_OPS, 6)
            idx = [augment.OP_ORDER.index(o) for o in plan.selected_ops]
            assert idx == sorted(idx)

    def test_plan_determinism(self):
        p1 = augment.sample_composition(np.random.default_rng(7), augment.MAST15_OPS, 4)
        p2 = augment.sample_composition(np.random.default_rng(7), augment.MAST15_OPS, 4)
        assert p1.selected_ops == p2.selected_ops
        assert p1.view_params == p2.view_params


class TestMakeViews:
    def test_empty_composition_is_identity(self):
        img = random_image(20)
        plan = augment.CompositionPlan(selected_ops=[], view_params=([], []))
        v, vp = augment.make_views(img, plan)
        np.testing.assert_array_equal(v, img)
        np.testing.assert_array_equal(vp, img)

    def test_flip_both_views_identical(self):
        img = random_image(21)
        plan = augment.CompositionPlan(
            selected_ops=["RandomFlip"],
            view_params=([{"fired": True}], [{"fired": True}]),
        )
        v, vp = augment.make_views(img, plan)
        np.testing.assert_array_equal(v, vp)

    def test_independent_noise_views_differ(self):
        # Over 100 trials the two views virtually never coincide.
        rng = np.random.default_rng(3)
        img = random_image(22)
        differing = 0
        for _ in range(100):
            plan = augment.sample_composition(rng, ["GaussianNoise"], 1)
            for view in (0, 1):
                plan.view_params[view][0]["fired"] = True
            v, vp = augment.make_views(img, plan)
            if not np.array_equal(v, vp):
                differing += 1
        assert differing >= 99

    def test_view_determinism_from_seed(self):
        img = random_image(23)
        plans = [
            augment.sample_composition(np.random.default_rng(99), augment.MAST15_OPS, 5)
            for _ in range(2)
        ]
        v1 = augment.make_views(img, plans[0])
        v2 = augment.make_views(img, plans[1])
        np.testing.assert_array_equal(v1[0], v2[0])
        np.testing.assert_array_equal(v1[1], v2[1])

    def test_unfired_op_is_identity_for_that_view(self):
        img = random_image(24)
        plan = augment.CompositionPlan(
            selected_ops=["Invert"],
            view_params=([{"fired": False}], [{"fired": True}]),
        )
        v, vp = augment.make_views(img, plan)
        np.testing.assert_array_equal(v, img)
        np.testing.assert_allclose(vp, 1.0 - img, atol=1e-7)


class TestStrengthMapping:
    def test_plain_ops_scale_up(self):
        assert augment.magnitude_at_strength("GaussianBlur", 0.0) == pytest.approx(0.1)
        assert augment.magnitude_at_strength("GaussianBlur", 1.0) == pytest.approx(2.0)

    def test_crop_strong_end_is_small_ratio(self):
        assert augment.magnitude_at_strength("RandomResizedCrop", 1.0) == pytest.approx(0.2)
        assert augment.magnitude_at_strength("RandomResizedCrop", 0.0) == pytest.approx(1.0)

    def test_symmetric_ops_use_positive_arm(self):
        assert augment.magnitude_at_strength("Rotate", 0.5) == pytest.approx(15.0)

    def test_rotate_quarter_exactness(self):
        img = random_image(30)
        assert np.array_equal(augment.rotate_quarter(img, 0), img)
        back = augment.rotate_quarter(augment.rotate_quarter(img, 1), 3)
        np.testing.assert_array_equal(back, img)
