"""Sequence VAE: closed-form KL values, Monte-Carlo agreement, sampling
contracts, and an overfit-one-shape smoke test."""

import numpy as np
import pytest

from brepsynth.autodiff import Tape, Tensor
from brepsynth.corpus import unit_cube
from brepsynth.topocodec import build_fef, flatten_fef, unflatten_fef
from brepsynth.training import build_system, prepare_dataset, train_vae
from brepsynth.vae import SamplingExhausted, kl_standard_normal, vae_loss, vae_sample


def kl_value(mu, logvar):
    return float(kl_standard_normal(Tensor(np.atleast_2d(mu)), Tensor(np.atleast_2d(logvar))).data[0])


def test_kl_zero_at_prior():
    assert kl_value([0.0, 0.0], [0.0, 0.0]) == pytest.approx(0.0, abs=1e-12)


def test_kl_unit_mean():
    assert kl_value([1.0], [0.0]) == pytest.approx(0.5)


def test_kl_variance_e():
    # mu=0, sigma^2=e: -(1 + 1 - 0 - e)/2 = (e - 2)/2
    assert kl_value([0.0], [1.0]) == pytest.approx((np.e - 2) / 2)


def test_kl_nonnegative_random():
    rng = np.random.default_rng(0)
    for _ in range(100):
        mu = rng.normal(size=4)
        logvar = rng.normal(size=4)
        assert kl_value(mu, logvar) >= -1e-12


def test_kl_matches_monte_carlo():
    rng = np.random.default_rng(1)
    for _ in range(10):
        mu = rng.normal(size=3)
        logvar = rng.normal(size=3) * 0.5
        closed = kl_value(mu, logvar)
        sigma = np.exp(0.5 * logvar)
        z = mu + sigma * rng.standard_normal((100_000, 3))
        logq = (-0.5 * ((z - mu) / sigma) ** 2 - np.log(sigma) - 0.5 * np.log(2 * np.pi)).sum(axis=1)
        logp = (-0.5 * z**2 - 0.5 * np.log(2 * np.pi)).sum(axis=1)
        assert abs((logq - logp).mean() - closed) < 1e-2 * max(1.0, abs(closed)) + 1e-2


def test_vae_loss_components(tiny_preset):
    system = build_system(tiny_preset, seed=0)
    cube_seq = flatten_fef(build_fef(unit_cube().ef, 6))
    rng = np.random.default_rng(2)
    with Tape():
        loss, recon, kl = vae_loss(system.ef_vae, [cube_seq, cube_seq], rng)
    assert float(kl.data) >= 0
    assert float(loss.data) == pytest.approx(float(recon.data) + float(kl.data))


def test_vae_sample_deterministic(tiny_preset):
    system = build_system(tiny_preset, seed=0)
    # untrained models may fail triangularity every retry; equality of the
    # outcome (sequence or exhaustion) is the contract under one seed
    def attempt(seed):
        try:
            return vae_sample(system.ef_vae, seed).tokens
        except SamplingExhausted:
            return None

    assert attempt(7) == attempt(7)


def test_vae_sample_token_bounds(tiny_preset):
    system = build_system(tiny_preset, seed=1)
    got = 0
    for seed in range(30):
        try:
            seq = vae_sample(system.ef_vae, seed)
        except SamplingExhausted:
            continue
        got += 1
        assert all(t <= system.ef_vae.k_max for t in seq.body)
        assert seq.tokens[-1] == system.ef_vae.eos
    assert got > 0


def test_vae_overfit_cube_modal_sample(tiny_preset):
    system = build_system(tiny_preset, seed=3)
    cube = unit_cube()
    dataset = prepare_dataset_for([cube], system)
    log = train_vae(system, dataset, steps=600, seed=0, batch_size=8)
    assert log.losses[-1] < log.losses[0]
    cube_fef = build_fef(cube.ef, cube.n_f)
    hits = 0
    for seed in range(16):
        try:
            seq = vae_sample(system.ef_vae, seed)
        except SamplingExhausted:
            continue
        if len(seq.body) == 15 and np.array_equal(unflatten_fef(seq).counts, cube_fef.counts):
            hits += 1
    assert hits >= 12  # modal shape dominates after overfitting


def prepare_dataset_for(models, system):
    import os
    import tempfile

    from brepsynth.brepfile import write_brep
    from brepsynth.training import prepare_dataset

    tmp = tempfile.mkdtemp()
    paths = []
    for i, m in enumerate(models):
        path = os.path.join(tmp, f"m{i}.brep")
        write_brep(m, path)
        paths.append(path)
    return prepare_dataset(paths, system)
