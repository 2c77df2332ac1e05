import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artfield import _plane_kernels as PK
from artfield.deform import IdentityDeformer, Skeleton, SkinningDeformer
from artfield.field import (
    Decoder,
    TriPlane,
    aggregate,
    decode,
    decoder_backward,
    decoder_forward,
    field_at,
    init_field,
    load_field,
    sample_plane,
    save_field,
    softplus,
)
from oracles import bilinear_loop, fd_grad


def centres(n):
    return -1.0 + (2.0 * np.arange(n) + 1.0) / n


def affine_plane(n, a=0.7, b=-0.3, c=0.2):
    c_ = centres(n)
    v, u = np.meshgrid(c_, c_, indexing="ij")
    return (a * u + b * v + c)[..., None]


def random_decoder(rng, c=8, h=16, c_out=4, dtype=np.float64):
    return Decoder(rng.normal(size=(c, h)).astype(dtype), rng.normal(size=h).astype(dtype),
                   rng.normal(size=(h, 1 + c_out)).astype(dtype), rng.normal(size=1 + c_out).astype(dtype))


# sample_plane

def test_constant_plane(rng):
    p = np.full((8, 8, 3), 2.5)
    uv = rng.uniform(-1.5, 1.5, (100, 2))
    np.testing.assert_allclose(sample_plane(p, uv), 2.5, rtol=1e-15, atol=0)


def test_texel_centre_reproduction():
    n = 8
    p = affine_plane(n, 1.0, 0.0, 0.0)
    c = centres(n)
    for i in range(n):
        for j in range(n):
            assert sample_plane(p, [c[i], c[j]])[0] == c[i]


def test_midpoint_of_four_texels(rng):
    p = rng.normal(size=(6, 6, 5))
    c = centres(6)
    uv = [(c[2] + c[3]) / 2, (c[1] + c[2]) / 2]
    want = (p[1, 2] + p[1, 3] + p[2, 2] + p[2, 3]) / 4
    np.testing.assert_allclose(sample_plane(p, uv), want, atol=1e-14)


def test_sample_matches_loop_oracle(rng):
    p = rng.normal(size=(7, 7, 4))
    uv = rng.uniform(-1.2, 1.2, (300, 2))
    got = sample_plane(p, uv)
    for k in range(len(uv)):
        np.testing.assert_allclose(got[k], bilinear_loop(p, *uv[k]), atol=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.integers(2, 16))
def test_linear_precision_inside_texel_hull(u, v, n):
    # exact reproduction of affine data holds between the outer texel
    # centres; beyond them the border texels are repeated
    lim = 1.0 - 1.0 / n
    u, v = np.clip([u, v], -lim, lim)
    got = sample_plane(affine_plane(n), [u, v])[0]
    assert abs(got - (0.7 * u - 0.3 * v + 0.2)) < 1e-12


def test_out_of_range_clamps(rng):
    p = rng.normal(size=(4, 4, 2))
    assert np.array_equal(sample_plane(p, [5.0, -7.0]), p[0, 3])
    assert np.array_equal(sample_plane(p, [1.0, -1.0]), p[0, 3])


# aggregate

def test_aggregate_zero():
    assert not aggregate(np.zeros((5, 3)), TriPlane.zeros(8, 4)).any()


def test_aggregate_xy_only(rng):
    planes = np.zeros((3, 8, 8, 4))
    planes[0] = rng.normal(size=(8, 8, 4))
    x = rng.uniform(-1, 1, (50, 3))
    np.testing.assert_array_equal(aggregate(x, TriPlane(planes)), sample_plane(planes[0], x[:, :2]))


def test_aggregate_three_sample_oracle(rng):
    planes = rng.normal(size=(3, 9, 9, 5))
    x = rng.uniform(-1, 1, (200, 3))
    want = np.array([bilinear_loop(planes[0], a, b) + bilinear_loop(planes[1], b, c)
                     + bilinear_loop(planes[2], a, c) for a, b, c in x])
    np.testing.assert_allclose(aggregate(x, TriPlane(planes)), want, atol=1e-12)


def test_aggregate_additive(rng):
    a = rng.normal(size=(3, 8, 8, 3))
    b = rng.normal(size=(3, 8, 8, 3))
    x = rng.uniform(-1, 1, (100, 3))
    np.testing.assert_allclose(aggregate(x, TriPlane(a + b)),
                               aggregate(x, TriPlane(a)) + aggregate(x, TriPlane(b)), atol=1e-12)


def test_compiled_gather_matches_reference(rng):
    planes = rng.normal(size=(3, 8, 8, 6))
    x = rng.uniform(-1.3, 1.3, (500, 3))
    np.testing.assert_allclose(PK.gather(x, planes), aggregate(x, TriPlane(planes)), atol=1e-12)


def test_scatter_is_gather_adjoint(rng):
    planes = rng.normal(size=(3, 6, 6, 4))
    x = rng.uniform(-1, 1, (40, 3))
    g = rng.normal(size=(40, 4))
    lhs = (PK.gather(x, planes) * g).sum()
    rhs = (PK.scatter(x, g, 6) * planes).sum()
    assert abs(lhs - rhs) < 1e-10


def test_scatter_touches_four_texels_per_plane():
    x = np.array([[0.1, -0.2, 0.3]])
    grad = PK.scatter(x, np.ones((1, 1)), 8)
    assert [(np.count_nonzero(grad[k])) for k in range(3)] == [4, 4, 4]


def test_triplane_validation():
    with pytest.raises(ValueError):
        TriPlane(np.zeros((2, 4, 4, 1)))
    p = np.zeros((3, 4, 4, 1))
    p[1, 2, 2, 0] = np.nan
    with pytest.raises(ValueError):
        TriPlane(p)


# decoder

def test_decode_zero_weights():
    d = Decoder(np.zeros((4, 3)), np.zeros(3), np.zeros((3, 6)), np.zeros(6))
    sigma, f = decode(np.ones((2, 4)), d)
    np.testing.assert_allclose(sigma, np.log(2.0), rtol=1e-15)
    assert not f.any()


def test_decode_softplus_tail():
    d = Decoder(np.zeros((4, 3)), np.zeros(3), np.zeros((3, 2)), np.array([-20.0, 0.0]))
    sigma, _ = decode(np.ones((1, 4)), d)
    assert 0 <= sigma[0] < 1e-8


def test_decode_matmul_oracle(rng):
    d = random_decoder(rng)
    x = rng.normal(size=(20, 8))
    sigma, f = decode(x, d)
    for k in range(20):
        hid = [max(0.0, sum(x[k, i] * d.w1[i, j] for i in range(8)) + d.b1[j]) for j in range(16)]
        raw = [sum(hid[j] * d.w2[j, o] for j in range(16)) + d.b2[o] for o in range(5)]
        assert abs(sigma[k] - np.log1p(np.exp(raw[0]))) < 1e-10
        np.testing.assert_allclose(f[k], raw[1:], atol=1e-10)


def test_decode_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        decode(np.ones((1, 5)), random_decoder(rng))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_density_nonnegative(seed):
    r = np.random.default_rng(seed)
    d = random_decoder(r)
    sigma, _ = decode(r.normal(size=(30, 8)) * 10, d)
    assert np.all(sigma >= 0)


def test_softplus_stable():
    assert softplus(np.array([1000.0]))[0] == 1000.0
    assert softplus(np.array([-1000.0]))[0] == 0.0


def test_decoder_backward_finite_differences(rng):
    d = random_decoder(rng)
    x = rng.normal(size=(6, 8))
    a = rng.normal(size=6)
    b = rng.normal(size=(6, 4))

    def scalar():
        s, f, _ = decoder_forward(x, d)
        return float(a @ s + (b * f).sum())

    _, _, cache = decoder_forward(x, d)
    d_feat, grads = decoder_backward(a, b, cache, d)
    h = 1e-4
    checked = 0
    for name in ("w1", "b1", "w2", "b2"):
        arr = getattr(d, name)
        for idx in rng.choice(arr.size, min(arr.size, 15), replace=False):
            num = fd_grad(scalar, arr, idx, h)
            ana = grads[name].flat[idx]
            assert abs(ana - num) <= 1e-5 * max(abs(num), abs(ana), 1e-3), (name, idx, ana, num)
            checked += 1
    for idx in rng.choice(x.size, 15, replace=False):
        num = fd_grad(scalar, x, idx, h)
        assert abs(d_feat.flat[idx] - num) <= 1e-5 * max(abs(num), 1e-3)
        checked += 1
    assert checked >= 60


# field_at

def test_field_at_identity(rng):
    tri, dec = init_field(8, 4, 8, 3, seed=3)
    x = rng.uniform(-1, 1, (40, 3))
    s1, f1 = field_at(x, tri, dec, IdentityDeformer())
    s2, f2 = decode(aggregate(x, tri), dec)
    assert np.array_equal(s1, s2) and np.array_equal(f1, f2)


def test_field_at_translation(rng):
    tri, dec = init_field(16, 4, 8, 3, seed=4)
    t = np.array([0.1, -0.2, 0.05])
    skel = Skeleton([[0, 0, 0]], [[0.1, 0, 0]], [np.eye(3)], [t])
    x = rng.uniform(-0.8, 0.8, (100, 3))
    s1, f1 = field_at(x, tri, dec, SkinningDeformer(skel))
    s2, f2 = decode(aggregate(x + t, tri), dec)
    np.testing.assert_allclose(s1, s2, atol=1e-12)
    np.testing.assert_allclose(f1, f2, atol=1e-12)


def test_field_at_zero_planes(rng):
    tri = TriPlane.zeros(8, 4)
    dec = Decoder(np.zeros((4, 3)), np.zeros(3), np.zeros((3, 4)), np.zeros(4))
    skel = Skeleton([[0, 0, 0]], [[1, 0, 0]], [np.eye(3)], [[5.0, 0, 0]])
    s, f = field_at(rng.normal(size=(20, 3)), tri, dec, SkinningDeformer(skel))
    np.testing.assert_allclose(s, np.log(2.0))
    assert not f.any()


# init and files

def test_init_ranges_and_seed():
    tri, dec = init_field(16, 8, 32, 4, seed=1)
    assert tri.planes.dtype == np.float32 and tri.planes.shape == (3, 16, 16, 8)
    assert np.abs(tri.planes).max() <= 0.1
    assert np.abs(dec.w1).max() <= 1 / np.sqrt(8) and np.abs(dec.w2).max() <= 1 / np.sqrt(32)
    tri2, dec2 = init_field(16, 8, 32, 4, seed=1)
    assert np.array_equal(tri.planes, tri2.planes) and np.array_equal(dec.w2, dec2.w2)


def test_field_defaults():
    tri, dec = init_field()
    assert (tri.resolution, tri.channels, dec.hidden, dec.out_channels) == (128, 32, 64, 32)


def test_tplf_roundtrip_and_layout(tmp_path):
    tri, dec = init_field(4, 3, 5, 2, seed=2)
    p = str(tmp_path / "f.tplf")
    save_field(p, tri, dec)
    raw = open(p, "rb").read()
    assert raw[:4] == b"TPLF"
    assert np.frombuffer(raw[4:20], "<u4").tolist() == [4, 3, 5, 2]
    body = np.frombuffer(raw[20:], "<f4")
    assert np.array_equal(body[:3 * 4 * 4 * 3], tri.planes.ravel())
    assert np.array_equal(body[-3:], dec.b2)
    assert len(body) == 3 * 16 * 3 + 15 + 5 + 15 + 3
    tri2, dec2 = load_field(p)
    assert np.array_equal(tri2.planes, tri.planes) and np.array_equal(dec2.w1, dec.w1)


def test_tplf_bad_magic(tmp_path):
    p = tmp_path / "x.tplf"
    p.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(ValueError):
        load_field(str(p))


def test_tplf_truncated(tmp_path):
    tri, dec = init_field(4, 3, 5, 2)
    p = str(tmp_path / "f.tplf")
    save_field(p, tri, dec)
    data = open(p, "rb").read()
    open(p, "wb").write(data[:-7])
    with pytest.raises(ValueError, match="truncated"):
        load_field(p)
