"""Smoke tests for the python bindings."""

import numpy as np
import pytest

import mrfkit


def test_tensor_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    arr = rng.standard_normal((4, 5)) + 1j * rng.standard_normal((4, 5))
    path = tmp_path / "t.mrft"
    mrfkit.write_tensor(path, arr)
    back = mrfkit.read_tensor(path)
    assert back.shape == arr.shape
    np.testing.assert_array_equal(back, arr)
    # header starts with the MRFT magic
    assert path.read_bytes()[:4] == b"MRFT"


def test_fingerprint_single_pulse_closed_form():
    t1, t2, ti, te = 750.0, 65.0, 25.0, 3.0
    sig, leak = mrfkit.simulate_fingerprint(
        t1, t2, [90.0], tr_ms=12.0, te_ms=te, ti_ms=ti, n_states=8
    )
    expected = -(1.0 - 2.0 * np.exp(-ti / t1)) * np.exp(-te / t2)
    assert sig.shape == (1,)
    assert abs(sig[0].real - expected) < 1e-12
    assert leak == 0.0


def test_nufft_matches_direct_dft():
    rng = np.random.default_rng(11)
    n = 16
    img = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    pts = rng.uniform(-0.5, 0.5, size=(200, 2))
    plan = mrfkit.NufftPlan(pts, [n, n], sigma=2.0, width=6)
    got = plan.forward(img)

    xs = np.arange(n) - n // 2
    gy, gx = np.meshgrid(xs, xs, indexing="ij")
    ref = np.array(
        [np.sum(img * np.exp(-2j * np.pi * (k[0] * gy + k[1] * gx))) for k in pts]
    )
    rel = np.linalg.norm(got - ref) / np.linalg.norm(ref)
    assert rel < 1e-4

    # adjoint dot test at double precision
    y = rng.standard_normal(200) + 1j * rng.standard_normal(200)
    aty = plan.adjoint(y)
    lhs = np.vdot(got, y)
    rhs = np.vdot(img, aty)
    assert abs(lhs - rhs) / abs(lhs) < 1e-12


def test_dcf_positive():
    pts = mrfkit.make_spiral(64, 4, [16, 16], turns=2.0)
    plan = mrfkit.NufftPlan(pts, [16, 16])
    w = plan.dcf()
    assert w.shape == (64 * 4,)
    assert np.all(w > 0)
    assert w.max() == pytest.approx(1.0)


def test_basis_and_match_self_consistency():
    flips = mrfkit.default_flip_train(60)
    atoms, t1s, t2s = mrfkit.build_dictionary(
        [300.0, 800.0, 2000.0], [40.0, 80.0, 300.0], flips
    )
    v, sv, energy = mrfkit.compute_basis(atoms, t1s, t2s, k=3)
    assert v.shape == (60, 3)
    assert 0.9 < energy <= 1.0 + 1e-12
    # a voxel holding a scaled atom matches itself
    coeffs = mrfkit.compress(atoms[4][None, :], v)[0]
    tsmi = np.tile(2.5 * coeffs, (2, 2, 1))
    t1, t2, pd = mrfkit.dict_match(tsmi, atoms, t1s, t2s, v)
    assert t1[0, 0] == t1s[4]
    assert t2[0, 0] == t2s[4]
    assert pd[0, 0] == pytest.approx(2.5, rel=1e-8)


def test_metrics():
    ref = np.full((8, 8), 100.0)
    est = ref * 1.1
    mask = np.ones((8, 8))
    assert mrfkit.mape(est, ref, mask) == pytest.approx(10.0)
    assert mrfkit.ssim(ref, ref, mask) == pytest.approx(1.0)
    assert mrfkit.psnr(ref, ref, mask) == 200.0


def test_end_to_end_tiny_dataset(tmp_path):
    mrfkit.build_desk_dataset(
        tmp_path / "ds", grid=[16, 16], c=2, m=64, l=4, t=24, k=3, seed=7
    )
    assert (tmp_path / "ds" / "manifest.txt").exists()
    x = mrfkit.recon(tmp_path / "ds" / "manifest.txt", "svdmrf")
    assert x.shape == (16, 16, 3)
    assert np.isfinite(x).all()
