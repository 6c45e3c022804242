import numpy as np
import pytest

from tensorslice.data import spirals
from tensorslice.decompose import CompressionPlan, PlanEntry
from tensorslice.distill import (
    CacheMismatchError,
    FeatureCache,
    capture_features,
    distill_slice,
    global_finetune,
    hybrid_local_global,
    local_tensorize,
    subset_indices,
)
from tensorslice.model import (
    Slice,
    forward,
    make_mlp,
    model_checksum,
    partition,
    plan_uniform,
    replace_slice,
    same_params,
    tensorize,
    tensorize_slice,
)
from tensorslice.train import DivergenceError, TrainConfig


@pytest.fixture(scope="module")
def toy():
    net = make_mlp([2, 16, 16, 16, 2], seed=0)  # 7 layers
    data = spirals(200, seed=0)
    return net, data


def test_subset_nesting():
    big = subset_indices(100, 1.0, 3)
    small = subset_indices(100, 0.2, 3)
    assert len(small) == 20 and set(small) <= set(big)
    assert np.array_equal(subset_indices(100, 0.6, 3)[:0], [])
    with pytest.raises(ValueError):
        subset_indices(10, 0.0, 0)


def test_capture_whole_net_slice(toy):
    net, data = toy
    (cache,) = capture_features(net, data, [Slice(0, len(net))])
    np.testing.assert_array_equal(cache.inputs, data.inputs)
    np.testing.assert_array_equal(cache.outputs, forward(net, data.inputs))
    assert cache.checksum == model_checksum(net)


def test_adjacent_slices_share_boundary_bit_exactly(toy):
    net, data = toy
    caches = capture_features(net, data, partition(net, [2, 4]), batch_size=64)
    for a, b in zip(caches, caches[1:]):
        assert a.outputs.tobytes() == b.inputs.tobytes()
    assert [len(c.input_batches) for c in caches] == [4, 4, 4]
    assert [x.shape[0] for x in caches[0].input_batches] == [y.shape[0] for y in caches[0].output_batches]


def test_cache_disk_roundtrip_and_checksum_guard(toy, tmp_path):
    net, data = toy
    (cache,) = capture_features(net, data, [Slice(2, 4)], fraction=0.5, seed=1, cache_dir=tmp_path)
    d = tmp_path / cache.checksum / "slice-0"
    assert {p.name for p in d.iterdir()} == {"inputs.bin", "outputs.bin", "meta"}
    back = FeatureCache.load(tmp_path, cache.checksum, 0)
    assert back.inputs.tobytes() == cache.inputs.tobytes()
    assert np.array_equal(back.sample_indices, cache.sample_indices)
    with pytest.raises(CacheMismatchError):
        distill_slice(list(net.layers[2:4]), cache, TrainConfig(epochs=1), expected_checksum="0" * 64)


def test_full_rank_slice_is_already_healed(toy):
    net, data = toy
    s = Slice(2, 4)
    full = CompressionPlan((PlanEntry(2, "mpo", in_dims=(4, 4), out_dims=(4, 4), bonds=(16,)),))
    tens = tensorize_slice(net, s, full)
    (cache,) = capture_features(net, data, [s])
    _, rep = distill_slice(list(tens.layers[2:4]), cache, TrainConfig(epochs=1, learning_rate=0.0))
    assert rep.losses[0] < 1e-12


def test_truncated_slice_loss_drops(toy):
    net, data = toy
    s = Slice(2, 4)
    plan = plan_uniform(net, 0.6, layers=[2])
    tens = tensorize_slice(net, s, plan)
    (cache,) = capture_features(net, data, [s])
    _, rep = distill_slice(list(tens.layers[2:4]), cache, TrainConfig(epochs=5, learning_rate=1e-2))
    assert rep.losses[-1] < rep.losses[0]


def test_local_tensorize_skip_all_returns_original(toy):
    net, data = toy
    plan = CompressionPlan(tuple(PlanEntry(i, "skip") for i in (0, 2, 4, 6)))
    out, reports = local_tensorize(net, data, partition(net, [2, 4]), plan, TrainConfig(epochs=1))
    assert same_params(out, net) and len(reports) == 0


def test_local_tensorize_single_slice_equals_distill_and_splice(toy):
    net, data = toy
    s = Slice(2, 4)
    plan = plan_uniform(net, 0.5, layers=[2])
    cfg = TrainConfig(epochs=2, seed=7)
    out, reports = local_tensorize(net, data, [Slice(0, 2), s, Slice(4, 7)], plan, cfg)
    tens = tensorize_slice(net, s, plan)
    (cache,) = capture_features(net, data, [s], seed=cfg.seed, slice_ids=[1])
    from tensorslice.train import derive_seed

    healed, _ = distill_slice(list(tens.layers[2:4]), cache, cfg, seed=derive_seed(cfg.seed, 1))
    assert same_params(out, replace_slice(tens, s, healed))


def test_slice_independence_bit_exact(toy):
    net, data = toy
    slices = partition(net, [2, 4])
    plan = plan_uniform(net, 0.5, layers=[2, 4])
    out, _ = local_tensorize(net, data, slices, plan, TrainConfig(epochs=1))
    # layers outside the tensorized ones are untouched
    for i in (0, 6):
        for k, v in net.layers[i].params().items():
            assert out.layers[i].params()[k].tobytes() == v.tobytes()


def test_global_freezes_non_tensorized_layers(toy):
    net, data = toy
    comp = tensorize(net, plan_uniform(net, 0.5, layers=[2]))
    out, rep = global_finetune(comp, data, TrainConfig(epochs=1, learning_rate=1e-2))
    for i in (0, 4, 6):
        for k, v in comp.layers[i].params().items():
            assert out.layers[i].params()[k].tobytes() == v.tobytes()
    assert not same_params(out, comp)
    assert rep.slice_index == "global"
    zero, _ = global_finetune(comp, data, TrainConfig(epochs=1, learning_rate=0.0))
    assert same_params(zero, comp)


def test_hybrid_degenerate_schedules(toy):
    net, data = toy
    slices = partition(net, [2, 4])
    plan = plan_uniform(net, 0.5, layers=[2, 4])
    lcfg, gcfg = TrainConfig(epochs=1, seed=3), TrainConfig(epochs=1, seed=3)
    local_only, _ = local_tensorize(net, data, slices, plan, lcfg)
    hyb, reps = hybrid_local_global(net, data, slices, plan, lcfg, TrainConfig(epochs=0))
    assert same_params(hyb, local_only)
    assert set(reps) == {"local", "global"}
    hyb2, _ = hybrid_local_global(net, data, slices, plan, TrainConfig(epochs=0), gcfg)
    glob, _ = global_finetune(tensorize(net, plan), data, gcfg)
    assert same_params(hyb2, glob)


def test_divergence_aborts(toy):
    net, data = toy
    plan = plan_uniform(net, 0.5, layers=[2])
    with pytest.raises(Exception) as e:
        local_tensorize(net, data, [Slice(0, 2), Slice(2, 4), Slice(4, 7)], plan,
                        TrainConfig(epochs=30, learning_rate=1e6))
    cause = getattr(e.value, "cause", e.value)
    assert isinstance(cause, DivergenceError)
