import numpy as np
import pytest

from comfno import autodiff as ad
from comfno import models as m
from comfno.errors import ShapeError
from comfno.grids import Mesh2D, shishkin_mesh, uniform_mesh


def input_stack(f_values, nodes):
    coords = np.tile(nodes, (f_values.shape[0], 1))
    return np.stack([f_values, coords], axis=-1)


def make_mesh(n=16, eps=1e-3):
    return shishkin_mesh(n, eps, layers="right")


def tiny_comfno(depth=1):
    base = m.FnoConfig(width=4, modes=2, depth=depth, in_channels=2)
    return m.ComFnoConfig(base=base, blocks=(m.LayerBlockSpec(1.0),),
                          extra_width=2, extra_modes=1, extra_depth=1,
                          dense_hidden=(3,))


def test_init_deterministic_and_seed_sensitive():
    cfg = m.FnoConfig(width=6, modes=3, depth=2)
    a = m.init_params(cfg, 7)
    b = m.init_params(cfg, 7)
    c = m.init_params(cfg, 8)
    assert a.keys() == b.keys() == c.keys()
    for k in a:
        assert np.array_equal(a[k].data, b[k].data)
    assert any(not np.array_equal(a[k].data, c[k].data) for k in a)


def test_parameter_count_closed_form():
    w, modes, depth, cin = 64, 16, 4, 2
    cfg = m.FnoConfig(width=w, modes=modes, depth=depth, in_channels=cin)
    params = m.init_params(cfg, 0)
    lift = cin * w + w
    per_layer = 2 * modes * w * w + w * w + w  # complex entries count twice
    proj = w * (2 * w) + 2 * w + (2 * w) * 1 + 1
    assert m.parameter_count(params) == lift + depth * per_layer + proj


def test_init_bounds():
    cfg = m.FnoConfig(width=8, modes=4, depth=2, in_channels=3)
    params = m.init_params(cfg, 3)
    for name, p in params.items():
        if name.endswith(".b"):
            assert np.all(p.data == 0.0)
        elif np.iscomplexobj(p.data):
            scale = 1.0 / (8 * 8)
            assert np.all(p.data.real >= 0.0) and np.all(p.data.real < scale)
            assert np.all(p.data.imag >= 0.0) and np.all(p.data.imag < scale)
        else:
            fan_in, fan_out = p.data.shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            assert np.all(np.abs(p.data) < bound)


def test_fno_forward_shape():
    cfg = m.FnoConfig(width=8, modes=4, depth=2)
    params = m.init_params(cfg, 0)
    mesh = make_mesh()
    f = np.random.default_rng(0).standard_normal((5, mesh.nodes.size))
    out = m.fno_forward(params, cfg, input_stack(f, mesh.nodes))
    assert out.data.shape == (5, mesh.nodes.size, 1)


def test_fno_zero_params_zero_output():
    cfg = m.FnoConfig(width=4, modes=2, depth=2)
    params = m.init_params(cfg, 0)
    for p in params.values():
        p.data = np.zeros_like(p.data)
    f = np.ones((2, 17))
    out = m.fno_forward(params, cfg, input_stack(f, make_mesh().nodes))
    assert np.all(out.data == 0.0)


def test_fno_resolution_transfer():
    # trained weights carry over to a coarser grid as long as the kept
    # mode count still fits
    cfg = m.FnoConfig(width=8, modes=4, depth=2)
    params = m.init_params(cfg, 1)
    rng = np.random.default_rng(1)
    fine = uniform_mesh(200)
    coarse = uniform_mesh(100)
    out_f = m.fno_forward(params, cfg, input_stack(rng.standard_normal((2, 201)), fine.nodes))
    out_c = m.fno_forward(params, cfg, input_stack(rng.standard_normal((2, 101)), coarse.nodes))
    assert out_f.data.shape[1] == 201 and out_c.data.shape[1] == 101


def test_fno_batch_permutation():
    cfg = m.FnoConfig(width=6, modes=3, depth=2)
    params = m.init_params(cfg, 2)
    mesh = make_mesh()
    a = input_stack(np.random.default_rng(2).standard_normal((4, 17)), mesh.nodes)
    with ad.no_grad():
        out = m.fno_forward(params, cfg, a).data
        perm = m.fno_forward(params, cfg, a[[2, 0, 3, 1]]).data
    assert np.array_equal(out[[2, 0, 3, 1]], perm)


def test_fno_channel_mismatch():
    cfg = m.FnoConfig(width=4, modes=2, depth=1, in_channels=2)
    params = m.init_params(cfg, 0)
    with pytest.raises(ShapeError):
        m.fno_forward(params, cfg, np.zeros((2, 17, 3)))


def test_stretch_anchor_value():
    mesh = make_mesh()
    f = np.sin(np.pi * mesh.nodes)[None, :]
    out = m.stretch_coordinates(f, 1.0, 1e-3, mesh.nodes)
    assert out[0, -1] == pytest.approx(f[0, -1])


def test_stretch_large_eps_constant():
    mesh = make_mesh()
    f = np.cos(mesh.nodes)[None, :]
    out = m.stretch_coordinates(f, 1.0, 1e9, mesh.nodes)
    assert np.allclose(out, f[0, -1], atol=1e-8)


def test_stretch_sweeps_whole_domain():
    # inside the layer window the channel replays f end to end; outside it
    # freezes at the far-end value
    mesh = make_mesh(64, 1e-3)
    f = mesh.nodes[None, :].copy()
    out = m.stretch_coordinates(f, 1.0, 1e-3, mesh.nodes)
    assert out[0, -1] == pytest.approx(1.0)
    assert out[0, 0] == pytest.approx(0.0)
    interior = mesh.nodes < 1.0 - 1e-3
    assert np.all(out[0, interior] == 0.0)


def test_stretch_eps_sensitivity():
    mesh = make_mesh(64, 1e-2)
    f = np.sin(40 * mesh.nodes)[None, :]
    a = m.stretch_coordinates(f, 1.0, 1e-2, mesh.nodes)
    b = m.stretch_coordinates(f, 1.0, 2e-2, mesh.nodes)
    assert not np.allclose(a, b)


def test_stretch_per_sample_eps():
    mesh = make_mesh(32, 1e-2)
    f = np.tile(np.sin(7 * mesh.nodes), (3, 1))
    eps = np.array([1e-3, 1e-2, 1e-1])
    out = m.stretch_coordinates(f, 1.0, eps, mesh.nodes)
    single = [m.stretch_coordinates(f[i:i + 1], 1.0, eps[i], mesh.nodes)[0]
              for i in range(3)]
    assert np.array_equal(out, np.stack(single))


def test_stretch_shape_error():
    with pytest.raises(ShapeError):
        m.stretch_coordinates(np.zeros((2, 10)), 1.0, 1e-3, np.linspace(0, 1, 11))
    with pytest.raises(ValueError):
        m.stretch_coordinates(np.zeros((1, 11)), 1.0, 0.0, np.linspace(0, 1, 11))


def test_comfno_zero_blocks_equals_fno0():
    base = m.FnoConfig(width=6, modes=3, depth=2)
    cfg = m.ComFnoConfig(base=base, blocks=())
    params = m.init_params(cfg, 4)
    mesh = make_mesh()
    a = input_stack(np.random.default_rng(4).standard_normal((3, 17)), mesh.nodes)
    with ad.no_grad():
        out = m.comfno_forward(params, cfg, a, 1e-3, mesh).data
        ref = m.fno_forward(params, base, a, prefix="fno0.").data
    assert np.array_equal(out, ref)


def test_comfno_zero_dense_annihilates_blocks():
    cfg = tiny_comfno()
    params = m.init_params(cfg, 5)
    for name, p in params.items():
        if ".dense" in name:
            p.data = np.zeros_like(p.data)
    mesh = make_mesh()
    a = input_stack(np.random.default_rng(5).standard_normal((2, 17)), mesh.nodes)
    with ad.no_grad():
        out = m.comfno_forward(params, cfg, a, 1e-3, mesh).data
        ref = m.fno_forward(params, cfg.base, a, prefix="fno0.").data
    assert np.array_equal(out, ref)


def test_comfno_block_additivity():
    base = m.FnoConfig(width=4, modes=2, depth=1)
    blocks = (m.LayerBlockSpec(1.0), m.LayerBlockSpec(0.0))
    cfg_both = m.ComFnoConfig(base=base, blocks=blocks, extra_width=2,
                              extra_modes=1, extra_depth=1, dense_hidden=(3,))
    params = m.init_params(cfg_both, 6)
    mesh = shishkin_mesh(16, 1e-2, layers="both", a=0.0, b=1.0)
    a = input_stack(np.random.default_rng(6).standard_normal((2, 17)), mesh.nodes)

    def subset(keep, rename):
        out = {k: v for k, v in params.items() if k.startswith("fno0.")}
        for k, v in params.items():
            if k.startswith(f"block{keep}."):
                out[k.replace(f"block{keep}.", f"block{rename}.")] = v
        return out

    cfg_a = m.ComFnoConfig(base=base, blocks=blocks[:1], extra_width=2,
                           extra_modes=1, extra_depth=1, dense_hidden=(3,))
    cfg_b = m.ComFnoConfig(base=base, blocks=blocks[1:], extra_width=2,
                           extra_modes=1, extra_depth=1, dense_hidden=(3,))
    with ad.no_grad():
        both = m.comfno_forward(params, cfg_both, a, 1e-2, mesh).data
        only_a = m.comfno_forward(subset(0, 0), cfg_a, a, 1e-2, mesh).data
        only_b = m.comfno_forward(subset(1, 0), cfg_b, a, 1e-2, mesh).data
        fno0 = m.fno_forward(params, base, a, prefix="fno0.").data
    assert np.allclose(both, only_a + only_b - fno0, atol=1e-12)


def test_comfno_gradient_matches_fd():
    cfg = tiny_comfno()
    params = m.init_params(cfg, 7)
    mesh = uniform_mesh(31)
    a = input_stack(np.random.default_rng(7).standard_normal((2, 32)), mesh.nodes)

    def loss(p):
        out = m.comfno_forward(p, cfg, a, 1e-2, mesh)
        return ad.tsum(ad.mul(out, out))

    report = ad.gradient_check(loss, params)
    assert report.max_rel_error < 1e-5, report.worst_param


def test_comfno_exp_nonfinite_names_block():
    from comfno.errors import NonFiniteError

    cfg = tiny_comfno()
    params = m.init_params(cfg, 8)
    params["block0.fno.lift.w"].data[0, 0] = np.nan
    mesh = make_mesh()
    a = input_stack(np.ones((1, 17)), mesh.nodes)
    with pytest.raises(NonFiniteError, match="block 0"):
        with ad.no_grad():
            m.comfno_forward(params, cfg, a, 1e-3, mesh)


def test_comfno_exp_clip_keeps_output_finite():
    cfg = tiny_comfno()
    params = m.init_params(cfg, 8)
    # force a huge exponent; the clip must cap the growth factor at e^20
    params["block0.fno.proj2.w"].data = np.full_like(
        params["block0.fno.proj2.w"].data, 1e6)
    params["block0.fno.proj2.b"].data = np.full_like(
        params["block0.fno.proj2.b"].data, 1e6)
    mesh = make_mesh()
    a = input_stack(np.ones((1, 17)), mesh.nodes)
    with ad.no_grad():
        out = m.comfno_forward(params, cfg, a, 1e-3, mesh).data
    assert np.all(np.isfinite(out))


def test_per_block_overrides():
    base = m.FnoConfig(width=4, modes=2, depth=2)
    blk = m.LayerBlockSpec(1.0, extra_width=6, extra_depth=2, dense_hidden=(5,))
    cfg = m.ComFnoConfig(base=base, blocks=(blk,), extra_width=2,
                         extra_modes=1, extra_depth=1)
    params = m.init_params(cfg, 0)
    assert params["block0.fno.lift.w"].data.shape == (4, 6)
    assert params["block0.dense0.w"].data.shape == (2, 5)
    assert "block0.fno.layer1.r" in params


def test_extra_depth_cap():
    base = m.FnoConfig(width=4, modes=2, depth=1)
    with pytest.raises(ValueError):
        m.ComFnoConfig(base=base, extra_depth=2)
    with pytest.raises(ValueError):
        m.ComFnoConfig(base=base, blocks=(m.LayerBlockSpec(1.0, extra_depth=3),),
                       extra_depth=1)


def test_comfno_2d_shapes_and_stretch_axes():
    base = m.FnoConfig(width=4, modes=(2, 2), depth=1, in_channels=3, ndim=2)
    cfg = m.ComFnoConfig(base=base,
                         blocks=(m.LayerBlockSpec(1.0, axis=0),
                                 m.LayerBlockSpec(1.0, axis=1)),
                         extra_width=2, extra_modes=(1, 1), extra_depth=1)
    params = m.init_params(cfg, 9)
    eps = 1e-2
    mx = shishkin_mesh(8, eps, layers="right")
    mesh = Mesh2D(mx, mx)
    X, Y = np.meshgrid(mx.nodes, mx.nodes, indexing="xy")
    f = np.random.default_rng(9).standard_normal((2, 9, 9))
    a = np.stack([f, np.tile(X, (2, 1, 1)), np.tile(Y, (2, 1, 1))], axis=-1)
    with ad.no_grad():
        out = m.comfno_forward(params, cfg, a, eps, mesh).data
    assert out.shape == (2, 9, 9, 1)

    xi = (1.0 - mx.nodes) / eps
    pts = np.clip(1.0 - np.clip(xi, -1.0, 1.0), 0.0, 1.0)
    st_x = m._stretched_stack(a, cfg.blocks[0], eps, mesh, 2)
    assert np.allclose(st_x[0, :, :, 1], np.tile(pts, (9, 1)))  # x re-sampled
    assert np.allclose(st_x[0, :, :, 2], np.tile(mx.nodes[:, None], (1, 9)))
    st_y = m._stretched_stack(a, cfg.blocks[1], eps, mesh, 2)
    assert np.allclose(st_y[0, :, :, 2], np.tile(pts[:, None], (1, 9)))  # y re-sampled
    assert np.allclose(st_y[0, :, :, 1], np.tile(mx.nodes, (9, 1)))
