"""Mirrored-view completion: virtual poses, the convolution network, its
gradients, training, fusion, and persistence."""
import numpy as np
import pytest

from reconbench.depth import DepthImage, render_depth
from reconbench.errors import InvalidInputError, MissingArtifactError
from reconbench.geometry import (
    TAG_GENERATED,
    TAG_OBSERVED,
    camera_looking_at,
)
from reconbench.mirror import (
    MirrorModelParams,
    MirrorTrainConfig,
    complete_view_learned,
    complete_view_oracle,
    conv2d,
    conv2d_reference,
    init_mirror_model,
    learned_completion,
    load_mirror_model,
    load_training_pairs,
    make_training_pair,
    masked_l1_loss,
    mirror_forward,
    mirror_pose,
    oracle_completion,
    reconstruct_view_dependent,
    save_mirror_model,
    save_training_pairs,
    splat_into_view,
    train_mirror_model,
    training_loss_gradients,
)
from reconbench.shapes import box_mesh, icosphere, merge_meshes


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(1e-8, abs(a) + abs(b))


def tiny_net(channels=(4, 1), seed=0) -> MirrorModelParams:
    return init_mirror_model(MirrorTrainConfig(channels=channels, seed=seed))


def zero_net(channels=(4, 1)) -> MirrorModelParams:
    init = tiny_net(channels)
    return MirrorModelParams(
        tuple(np.zeros_like(w) for w in init.weights),
        tuple(np.zeros_like(b) for b in init.biases),
    )


class TestMirrorPose:
    def test_point_reflection_of_position(self, front_camera):
        virtual = mirror_pose(front_camera, (0.0, 0.0, 0.0))
        assert np.allclose(virtual.position, [0.0, 0.0, -2.0], atol=1e-12)
        assert virtual.fx == front_camera.fx
        assert virtual.width == front_camera.width

    def test_reflection_through_off_center_pivot(self):
        cam = camera_looking_at((1.0, 2.0, 3.0), (0.5, 0.5, 0.5))
        virtual = mirror_pose(cam, (0.5, 0.5, 0.5))
        assert np.allclose(virtual.position, [0.0, -1.0, -2.0], atol=1e-12)

    def test_applying_twice_is_identity(self):
        cam = camera_looking_at((0.9, -1.4, 1.1), (0.0, 0.0, 0.0))
        back = mirror_pose(mirror_pose(cam, (0.0, 0.0, 0.0)), (0.0, 0.0, 0.0))
        assert np.allclose(back.position, cam.position, atol=1e-12)
        forward = cam.pose.rotation[:, 2]
        forward_back = back.pose.rotation[:, 2]
        assert np.allclose(forward, forward_back, atol=1e-9)

    def test_virtual_camera_faces_the_pivot(self):
        cam = camera_looking_at((2.0, 0.5, 0.8), (0.0, 0.0, 0.0))
        virtual = mirror_pose(cam, (0.0, 0.0, 0.0))
        to_center = -virtual.position / np.linalg.norm(virtual.position)
        assert np.allclose(virtual.pose.rotation[:, 2], to_center, atol=1e-12)

    def test_bad_center_rejected(self, front_camera):
        with pytest.raises(InvalidInputError):
            mirror_pose(front_camera, (0.0, 0.0))


class TestOracleSymmetry:
    def test_sphere_back_view_is_front_flipped(self, unit_sphere, front_camera):
        # for a shape symmetric about the camera axis the mirrored view
        # is the left-right flip of the front view
        front = render_depth(unit_sphere, front_camera)
        virtual = mirror_pose(front_camera, (0.0, 0.0, 0.0))
        back = complete_view_oracle(unit_sphere, virtual)
        assert np.max(np.abs(back.depth - np.fliplr(front.depth))) <= 1e-9

    def test_asymmetric_shape_breaks_the_flip(self, front_camera):
        # an L of two boxes: its far side is not the mirrored near side
        shape = merge_meshes(
            [
                box_mesh((0.5, 0.1, 0.1)),
                box_mesh((0.1, 0.1, 0.3), center=(-0.4, 0.0, 0.4)),
            ]
        )
        front = render_depth(shape, front_camera)
        virtual = mirror_pose(front_camera, (0.0, 0.0, 0.0))
        back = complete_view_oracle(shape, virtual)
        assert np.max(np.abs(back.depth - np.fliplr(front.depth))) > 1e-3


class TestConvolution:
    def test_fast_path_matches_reference(self, rng):
        for _ in range(5):
            c_in, c_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            x = rng.normal(size=(c_in, 6, 7))
            w = rng.normal(size=(c_out, c_in, 3, 3))
            b = rng.normal(size=c_out)
            fast = conv2d(x[None], w, b)[0]
            slow = conv2d_reference(x, w, b)
            assert np.max(np.abs(fast - slow)) <= 1e-12

    def test_identity_kernel(self, rng):
        x = rng.normal(size=(1, 1, 5, 5))
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 1, 1] = 1.0
        out = conv2d(x, w, np.zeros(1))
        assert np.allclose(out, x, atol=1e-15)

    def test_zero_padding_at_borders(self):
        x = np.ones((1, 1, 3, 3))
        w = np.ones((1, 1, 3, 3))
        out = conv2d(x, w, np.zeros(1))[0, 0]
        # interior pixel sees all nine ones, corner only four
        assert out[1, 1] == 9.0
        assert out[0, 0] == 4.0


class TestLossAndGradients:
    def test_masked_l1_ignores_invalid_target_pixels(self):
        out = np.array([[[1.0, 5.0], [2.0, 7.0]]])
        target = np.array([[[2.0, 0.0], [1.0, 0.0]]])
        loss, dout = masked_l1_loss(out, target)
        assert loss == pytest.approx(1.0)
        assert dout[0, 0, 1] == 0.0 and dout[0, 1, 1] == 0.0
        assert dout[0, 0, 0] == pytest.approx(-0.5)

    def test_all_invalid_target_rejected(self):
        with pytest.raises(InvalidInputError):
            masked_l1_loss(np.ones((1, 2, 2)), np.zeros((1, 2, 2)))

    def test_parameter_gradients_match_finite_differences(self):
        h = 1e-6
        checked = 0
        for seed in range(8):
            rng = np.random.default_rng(seed)
            params = tiny_net(channels=(3, 1), seed=seed)
            inputs = rng.uniform(0.5, 2.0, size=(2, 2, 5, 5))
            targets = rng.uniform(0.5, 2.0, size=(2, 5, 5))
            loss, gw, gb = training_loss_gradients(params, inputs, targets)
            out, _ = np.broadcast_arrays(
                mirror_forward(params, inputs[0, 0], inputs[0, 1]), targets[0]
            )
            # stay away from the L1 and rectifier kinks
            if np.min(np.abs(out - targets[0])) < 1e-3:
                continue
            for li in range(len(params.weights)):
                w = params.weights[li]
                for _ in range(4):
                    idx = tuple(int(rng.integers(s)) for s in w.shape)
                    wp = [x.copy() for x in params.weights]
                    wm = [x.copy() for x in params.weights]
                    wp[li][idx] += h
                    wm[li][idx] -= h
                    lp, _, _ = training_loss_gradients(
                        MirrorModelParams(tuple(wp), params.biases), inputs, targets
                    )
                    lm, _, _ = training_loss_gradients(
                        MirrorModelParams(tuple(wm), params.biases), inputs, targets
                    )
                    fd = (lp - lm) / (2 * h)
                    assert rel_err(float(gw[li][idx]), fd) <= 1e-4
                    checked += 1
                bi = int(rng.integers(params.biases[li].shape[0]))
                bp = [x.copy() for x in params.biases]
                bm = [x.copy() for x in params.biases]
                bp[li][bi] += h
                bm[li][bi] -= h
                lp, _, _ = training_loss_gradients(
                    MirrorModelParams(params.weights, tuple(bp)), inputs, targets
                )
                lm, _, _ = training_loss_gradients(
                    MirrorModelParams(params.weights, tuple(bm)), inputs, targets
                )
                fd = (lp - lm) / (2 * h)
                assert rel_err(float(gb[li][bi]), fd) <= 1e-4
                checked += 1
        assert checked >= 20


class TestTraining:
    def test_zero_epochs_keeps_initialization(self):
        rng = np.random.default_rng(1)
        splat = DepthImage(rng.uniform(0.5, 1.5, size=(8, 8)))
        mask = DepthImage(np.ones((8, 8)))
        target = DepthImage(rng.uniform(0.5, 1.5, size=(8, 8)))
        cfg = MirrorTrainConfig(channels=(4, 1), epochs=0, seed=3)
        result = train_mirror_model([((splat, mask), target)], cfg)
        expect = init_mirror_model(cfg)
        assert all(
            np.array_equal(a, b) for a, b in zip(result.params.weights, expect.weights)
        )
        assert result.epoch_losses == []

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        pairs = [
            (
                (
                    DepthImage(rng.uniform(0.5, 1.5, size=(8, 8))),
                    DepthImage(np.ones((8, 8))),
                ),
                DepthImage(rng.uniform(0.5, 1.5, size=(8, 8))),
            )
            for _ in range(3)
        ]
        cfg = MirrorTrainConfig(channels=(4, 1), epochs=10, seed=5)
        a = train_mirror_model(pairs, cfg)
        b = train_mirror_model(pairs, cfg)
        assert all(np.array_equal(x, y) for x, y in zip(a.params.weights, b.params.weights))
        assert a.epoch_losses == b.epoch_losses

    def test_identity_task_is_learnable(self):
        # target equals the splat channel: loss should fall well below
        # the initial error
        rng = np.random.default_rng(7)
        pairs = []
        for _ in range(4):
            img = rng.uniform(1.0, 2.0, size=(16, 16))
            splat = DepthImage(img)
            mask = DepthImage(np.ones((16, 16)))
            pairs.append(((splat, mask), DepthImage(img)))
        cfg = MirrorTrainConfig(
            channels=(8, 1), epochs=1500, learning_rate=0.03, lr_decay=0.997, seed=0
        )
        result = train_mirror_model(pairs, cfg)
        assert result.epoch_losses[-1] <= 0.02
        assert result.epoch_losses[-1] < 0.05 * result.epoch_losses[0]

    def test_decay_settles_lower_than_fixed_step(self):
        # single linear layer keeps the objective convex, so the only
        # obstacle is the constant-magnitude L1 step orbiting the optimum
        rng = np.random.default_rng(11)
        img = rng.uniform(1.0, 2.0, size=(12, 12))
        pairs = [((DepthImage(img), DepthImage(np.ones((12, 12)))), DepthImage(img))]
        for seed in (0, 1, 2):
            fixed = train_mirror_model(
                pairs,
                MirrorTrainConfig(
                    channels=(1,), epochs=600, learning_rate=0.02, seed=seed
                ),
            )
            decayed = train_mirror_model(
                pairs,
                MirrorTrainConfig(
                    channels=(1,),
                    epochs=600,
                    learning_rate=0.02,
                    lr_decay=0.99,
                    seed=seed,
                ),
            )
            assert decayed.epoch_losses[-1] <= 0.01
            assert decayed.epoch_losses[-1] < 0.1 * fixed.epoch_losses[-1]

    def test_empty_pairs_rejected(self):
        with pytest.raises(InvalidInputError):
            train_mirror_model([], MirrorTrainConfig())


class TestCompletionAndFusion:
    def test_zero_network_gives_all_invalid(self, unit_sphere, front_camera):
        image = render_depth(unit_sphere, front_camera)
        virtual = mirror_pose(front_camera, (0.0, 0.0, 0.0))
        completed = complete_view_learned(zero_net(), image, front_camera, virtual)
        assert completed.valid_count() == 0

    def test_negative_outputs_marked_invalid(self):
        # a bias-only network with a negative bias outputs below zero
        params = MirrorModelParams(
            (np.zeros((1, 2, 3, 3)),), (np.array([-0.5]),)
        )
        raw = mirror_forward(params, np.ones((4, 4)), np.ones((4, 4)))
        assert np.all(raw < 0.0)

    def test_fusion_tags_points_by_origin(self, unit_sphere, front_camera):
        observed = render_depth(unit_sphere, front_camera)
        cloud, seconds = reconstruct_view_dependent(
            observed, front_camera, oracle_completion(unit_sphere)
        )
        assert seconds > 0.0
        virtual = mirror_pose(front_camera, (0.0, 0.0, 0.0))
        n_back = complete_view_oracle(unit_sphere, virtual).valid_count()
        assert cloud.count(TAG_OBSERVED) == observed.valid_count()
        assert cloud.count(TAG_GENERATED) == n_back
        assert len(cloud) == observed.valid_count() + n_back

    def test_learned_factory_matches_direct_call(self, unit_sphere, front_camera):
        params = tiny_net()
        observed = render_depth(unit_sphere, front_camera)
        virtual = mirror_pose(front_camera, (0.0, 0.0, 0.0))
        via_factory = learned_completion(params)(observed, front_camera, virtual)
        direct = complete_view_learned(params, observed, front_camera, virtual)
        assert np.array_equal(via_factory.depth, direct.depth)

    def test_splat_into_view_round_trip_mask(self, unit_sphere, front_camera):
        observed = render_depth(unit_sphere, front_camera)
        splat, mask = splat_into_view(observed, front_camera, front_camera)
        assert np.array_equal(mask.depth > 0, splat.depth > 0)
        assert np.max(np.abs(splat.depth - observed.depth)) <= 1e-9


class TestPersistence:
    def test_model_round_trip(self, tmp_path):
        params = tiny_net(channels=(4, 2, 1), seed=9)
        path = tmp_path / "net.rbmr"
        save_mirror_model(path, params)
        loaded = load_mirror_model(path)
        assert all(np.array_equal(a, b) for a, b in zip(loaded.weights, params.weights))
        assert all(np.array_equal(a, b) for a, b in zip(loaded.biases, params.biases))

    def test_pairs_directory_round_trip(self, tmp_path, unit_sphere):
        cams = [
            camera_looking_at((0.0, 2.0, 0.5), (0.0, 0.0, 0.0)),
            camera_looking_at((1.5, -1.0, 0.8), (0.0, 0.0, 0.0)),
        ]
        examples = []
        for cam in cams:
            (pair, front) = make_training_pair(unit_sphere, cam)
            (splat, _mask), target = pair
            examples.append((front, splat, target))
        save_training_pairs(tmp_path / "pairs", examples)
        pairs, fronts = load_training_pairs(tmp_path / "pairs")
        assert len(pairs) == 2 and len(fronts) == 2
        for (front, splat, target), ((l_splat, l_mask), l_target), l_front in zip(
            examples, pairs, fronts
        ):
            # storage is 32-bit float
            assert np.allclose(l_front.depth, front.depth, atol=1e-5)
            assert np.allclose(l_splat.depth, splat.depth, atol=1e-5)
            assert np.allclose(l_target.depth, target.depth, atol=1e-5)
            assert np.array_equal(l_mask.depth, (l_splat.depth > 0).astype(float))

    def test_missing_manifest_raises(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            load_training_pairs(tmp_path / "nowhere")
