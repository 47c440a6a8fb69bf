import numpy as np
import pytest

from snesim.arch import SneConfig
from snesim.mapper import (PIPELINED, TILED, MappingError, MappingPlan, NetworkSpec, channel_tiles,
                           emit_pass_images, estimate_memory_traffic, plan, save_pass_images, tile_shape)
from snesim.neuron import LayerSpec, LifParams
from snesim.weights import FilterBank, unpack_weights, HEADER_SIZE


def bank(spec, fill=1):
    return FilterBank.single(np.full(spec.weight_shape, fill))


@pytest.mark.parametrize("h,w,npc,expected", [(32, 32, 64, (8, 8)), (4, 4, 64, (4, 4)), (8, 8, 16, (4, 4)),
                                              (3, 100, 64, (3, 21))])
def test_tile_shape(h, w, npc, expected):
    assert tile_shape(h, w, npc) == expected


def test_channel_tiles_cover_map():
    spec = LayerSpec(1, 1, 10, 13, 1, 1)
    tiles = channel_tiles(spec, 16)
    cells = {(y, x) for y0, x0, h, w in tiles for y in range(y0, y0 + h) for x in range(x0, x0 + w)}
    assert len(cells) == 130 == sum(h * w for _, _, h, w in tiles)
    assert all(h * w <= 16 for _, _, h, w in tiles)


def test_two_small_layers_pipelined():
    l0 = LayerSpec(1, 1, 32, 32, 3, 3, 1, 1)
    l1 = l0.next_layer(1, 3, 3, 1, 1)
    p = plan([l0, l1], SneConfig())
    assert p.mode == PIPELINED and p.n_passes == 1
    assert [s.slice for s in p.passes[0].slices] == [0, 1]


def test_wide_layer_tiled_in_four_passes():
    spec = LayerSpec(1, 32, 32, 32, 3, 3, 1, 1)
    p = plan([spec], SneConfig())
    assert p.mode == TILED and p.n_passes == 4
    for ps in p.passes:
        chans = {c.channel for c in ps.clusters()}
        assert len(chans) == 8
    assert p.neurons_required() == 32 * 1024


def test_capacity_threshold():
    cfg = SneConfig()
    exact = LayerSpec(1, 8, 32, 32, 1, 1)
    assert exact.n_out == cfg.capacity
    assert plan([exact], cfg).mode == PIPELINED
    over = LayerSpec(1, 1, 8193, 1, 1, 1)
    with pytest.raises(MappingError):
        plan([over], cfg)  # 8193 wide exceeds the 8-bit coordinate field
    over = LayerSpec(1, 9, 32, 32, 1, 1)
    assert plan([over], cfg).mode == TILED


def test_capacity_plus_one_neuron_is_tiled():
    cfg = SneConfig(n_slices=1, clusters_per_slice=2, neurons_per_cluster=4)
    fits = LayerSpec(1, 2, 2, 2, 1, 1)
    assert fits.n_out == cfg.capacity and plan([fits], cfg).mode == PIPELINED
    over = LayerSpec(1, 1, 3, 3, 1, 1)
    assert over.n_out == cfg.capacity + 1 and plan([over], cfg).mode == TILED


def test_plan_check_exhaustive_partition():
    cfg = SneConfig(n_slices=2, clusters_per_slice=4, neurons_per_cluster=16)
    specs = [LayerSpec(2, 3, 9, 7, 3, 3, 1, 1)]
    specs.append(specs[0].next_layer(5, 3, 3, 0, 0))
    p = plan(specs, cfg)
    p.check()
    covered = {(c.layer, c.channel, y, x) for ps in p.passes for c in ps.clusters()
               for y in range(c.y0, c.y0 + c.h) for x in range(c.x0, c.x0 + c.w)}
    assert len(covered) == sum(s.n_out for s in specs)


def test_plan_check_catches_double_mapping():
    cfg = SneConfig(n_slices=1)
    p = plan([LayerSpec(1, 1, 8, 8, 1, 1)], cfg)
    p.passes[0].slices[0].clusters.append(p.passes[0].slices[0].clusters[0])
    with pytest.raises(MappingError, match="twice"):
        p.check()


def test_channel_larger_than_device_splits_spatially():
    cfg = SneConfig(n_slices=1, clusters_per_slice=2, neurons_per_cluster=4)
    spec = LayerSpec(1, 1, 6, 6, 1, 1)
    p = plan([spec], cfg)
    assert p.mode == TILED and p.n_passes == 5
    assert any("split spatially" in n for n in p.extrapolations)
    with pytest.raises(MappingError, match="clusters"):
        plan([spec], cfg, allow_spatial_tiling=False)


def test_errors():
    with pytest.raises(MappingError, match="empty"):
        plan([], SneConfig())
    with pytest.raises(MappingError, match="channel"):
        plan([LayerSpec(1, 65, 4, 4, 1, 1)], SneConfig())
    a, b = LayerSpec(1, 2, 8, 8), LayerSpec(3, 1, 6, 6)
    with pytest.raises(MappingError, match="feed"):
        NetworkSpec([a, b])
    with pytest.raises(MappingError, match="slices"):
        plan([LayerSpec(1, 9, 32, 32, 1, 1)], SneConfig(), force_mode=PIPELINED)


def test_forced_tiled_mode():
    spec = LayerSpec(1, 2, 8, 8, 1, 1)
    p = plan([spec], SneConfig(), force_mode=TILED)
    assert p.mode == TILED and p.n_passes == 1


def test_multislice_layer_flagged():
    spec = LayerSpec(1, 2, 32, 32, 1, 1)
    p = plan([spec], SneConfig())
    assert p.mode == PIPELINED and len(p.passes[0].slices) == 2
    assert any("spans 2 slices" in n for n in p.extrapolations)


def test_plan_json_round_trip(tmp_path):
    specs = [LayerSpec(2, 3, 9, 7, 3, 3, 1, 1)]
    p = plan(specs, SneConfig(n_slices=1, clusters_per_slice=2, neurons_per_cluster=16))
    path = tmp_path / "plan.json"
    p.save(path)
    back = MappingPlan.load(path)
    assert back.to_dict() == p.to_dict()
    back.check()


def test_emit_pass_images_tiled(tmp_path):
    spec = LayerSpec(1, 32, 32, 32, 3, 3, 1, 1)
    w = FilterBank.single(np.random.default_rng(0).integers(-8, 8, spec.weight_shape))
    p = plan([spec], SneConfig())
    images = emit_pass_images(p, [w], [LifParams(leak=2, v_th=9)])
    assert len(images) == 4
    img = images[1].slice_images[0]
    lo, hi = images[1].records[0]["channels"]
    assert (lo, hi) == (8, 9)
    assert unpack_weights(img[HEADER_SIZE:], (1, 1, 3, 3)) == w.select_channels(lo, hi)
    assert images[1].records[0]["v_th"] == 9
    paths = save_pass_images(images, tmp_path)
    assert len(paths) == 32 and paths[0].read_bytes()[:4] == b"SNEW"


def test_emit_pass_images_pipelined_and_missing():
    l0 = LayerSpec(1, 1, 8, 8)
    l1 = l0.next_layer(1)
    p = plan([l0, l1], SneConfig())
    assert len(emit_pass_images(p, [bank(l0), bank(l1)])) == 1
    with pytest.raises(MappingError, match="layer 1"):
        emit_pass_images(p, [bank(l0)])


def test_memory_traffic():
    l0 = LayerSpec(1, 1, 8, 8)
    pp = plan([l0], SneConfig())
    assert estimate_memory_traffic(pp, 1000, [50]).total == 1050
    wide = LayerSpec(1, 32, 32, 32, 3, 3, 1, 1)
    pt = plan([wide], SneConfig())
    est = estimate_memory_traffic(pt, 1000, [400])
    assert sum(est.input_words) == 4000 and sum(est.output_words) == 400
    assert estimate_memory_traffic(pt, 0, [0]).total == 0
