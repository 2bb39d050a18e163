import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import assume, given, settings, strategies as st

from dynembed.embedders import (
    Embedding,
    history_weights,
    independent_ase,
    omnibus_embed,
    omnibus_matrix,
    select_dimension,
    separate_embed,
    uase,
)
from dynembed.linalg import procrustes
from dynembed.models import DsbmSpec, bundled_config_path, load_dsbm_config, sample_dsbm
from dynembed.mrdpg import noise_free_embedding
from dynembed.netseries import GraphSeries


@pytest.fixture(scope="module")
def fourblock_series():
    cfg = load_dsbm_config(bundled_config_path("fourblock"))
    spec = DsbmSpec(block_matrices=cfg.block_matrices, n_nodes=200)
    return spec, sample_dsbm(spec, seed=3)


def random_series(seed, n=15, t=3, p=0.35):
    rng = np.random.default_rng(seed)
    snaps = []
    for _ in range(t):
        upper = np.triu(rng.random((n, n)) < p, k=1).astype(float)
        snaps.append(sp.csr_matrix(upper + upper.T))
    return GraphSeries(snapshots=snaps)


class TestUase:
    def test_shapes_and_shared_scale(self, fourblock_series):
        _, series = fourblock_series
        emb = uase(series, 4)
        assert emb.left.shape == (200, 4)
        assert [p.shape for p in emb.points] == [(200, 4), (200, 4)]
        # left and right factors carry the same singular value scaling:
        # their Gram matrices match
        right = np.vstack(emb.points)
        gram_left = emb.left.T @ emb.left
        np.testing.assert_allclose(
            gram_left, right.T @ right, atol=1e-8 * np.max(gram_left)
        )

    def test_single_snapshot_equals_independent(self):
        series = random_series(1, t=1)
        joint = uase(series, 3)
        solo = independent_ase(series, 3)
        np.testing.assert_array_equal(joint.points[0], solo.points[0])

    def test_low_rank_optimality(self):
        # oracle: the truncation error must match the optimal tail energy
        series = random_series(7, n=20, t=2)
        d = 5
        emb = uase(series, d)
        unfolded = series.unfold().toarray()
        s_full = np.linalg.svd(unfolded, compute_uv=False)
        recon = emb.left @ np.vstack(emb.points).T
        err = np.linalg.norm(unfolded - recon)
        assert abs(err - np.linalg.norm(s_full[d:])) < 1e-8

    def test_matches_noise_free_route_on_expected_matrices(self, fourblock_series):
        spec, _ = fourblock_series
        grams = spec.gram_matrices()
        emb = uase([sp.csr_matrix(g) for g in grams], 4)
        left_nf, rights_nf = noise_free_embedding(grams, d=4)
        fit = procrustes(
            np.vstack([emb.left] + emb.points),
            np.vstack([left_nf] + rights_nf),
        )
        assert fit.residual < 1e-8

    def test_seeds_agree_up_to_rotation(self):
        spec = DsbmSpec(
            block_matrices=[np.array([[0.4, 0.1], [0.1, 0.3]])], n_nodes=300
        )
        series = sample_dsbm(spec, seed=9)
        stacked = []
        for seed in (0, 1):
            emb = uase(series, 2, seed=seed)
            # force the randomized path to exercise seed dependence
            from dynembed import linalg

            res = linalg.truncated_svd(series.unfold(), 2, seed=seed, dense_threshold=10)
            stacked.append(res.v * np.sqrt(res.s))
        fit = procrustes(stacked[0], stacked[1])
        assert fit.residual < 1e-4 * np.linalg.norm(stacked[1])


class TestOmnibus:
    def test_matrix_layout(self):
        series = random_series(11, n=6, t=3)
        m = omnibus_matrix(series)
        a = [x.toarray() for x in series.snapshots]
        np.testing.assert_array_equal(m[:6, :6], a[0])
        np.testing.assert_array_equal(m[6:12, :6], (a[1] + a[0]) / 2)
        np.testing.assert_array_equal(m[12:, 6:12], (a[2] + a[1]) / 2)

    def test_against_dense_eigendecomposition_oracle(self, fourblock_series):
        _, series = fourblock_series
        emb = omnibus_embed(series, 7)
        m = omnibus_matrix(series)
        w, q = np.linalg.eigh(m)
        order = np.argsort(-np.abs(w))[:7]
        oracle = q[:, order] * np.sqrt(np.abs(w[order]))
        stacked = np.vstack(emb.points)
        # compare the induced indefinite inner product structure, which is
        # basis-sign free
        signs = np.sign(w[order])
        np.testing.assert_allclose(
            stacked @ np.diag(signs) @ stacked.T,
            oracle @ np.diag(signs) @ oracle.T,
            atol=1e-6,
        )

    def test_signature_on_expected_matrices(self, fourblock_series):
        spec, _ = fourblock_series
        grams = [sp.csr_matrix(g) for g in spec.gram_matrices()]
        emb = omnibus_embed(grams, 7)
        assert emb.signatures == [(4, 3)]

    def test_matrix_free_matches_dense(self, fourblock_series, monkeypatch):
        spec, _ = fourblock_series
        grams = [sp.csr_matrix(g) for g in spec.gram_matrices()]
        dense = omnibus_embed(grams, 7, seed=0)
        monkeypatch.setenv("DYNEMBED_MEMORY_BUDGET", "1000")
        free = omnibus_embed(grams, 7, seed=0)
        fit = procrustes(np.vstack(free.points), np.vstack(dense.points))
        assert fit.residual < 1e-6 * np.linalg.norm(np.vstack(dense.points))


class TestIndependent:
    def test_per_snapshot_dims(self, fourblock_series):
        _, series = fourblock_series
        emb = independent_ase(series, [4, 3])
        assert emb.dims == [4, 3]
        assert emb.method == "independent"

    def test_reconstruction_with_signature(self):
        # low-rank expected matrix with a known indefinite spectrum; the
        # per-component sign is recovered through the Rayleigh quotient
        cfg = load_dsbm_config(bundled_config_path("fourblock"))
        spec = DsbmSpec(block_matrices=[cfg.block_matrices[0]], n_nodes=20)
        a = spec.gram_matrices()[0]
        emb = independent_ase([sp.csr_matrix(a)], 4)
        # eigenvalues of the underlying block matrix: three positive, one
        # negative (checked against a direct eigendecomposition)
        assert emb.signatures == [(3, 1)]
        p = emb.points[0]
        signs = np.array([np.sign(p[:, j] @ a @ p[:, j]) for j in range(4)])
        np.testing.assert_allclose(p @ np.diag(signs) @ p.T, a, atol=1e-8)

    def test_dims_length_mismatch(self):
        series = random_series(15, t=2)
        with pytest.raises(ValueError):
            independent_ase(series, [3])


class TestSeparate:
    def test_history_weights_constant(self):
        np.testing.assert_allclose(history_weights(2, "constant"), [1 / 3] * 3)

    def test_history_weights_exponential(self):
        # raw weights (0.25, 0.5, 1) for lags (2, 1, 0), normalized by 1.75
        w = history_weights(2, "exponential", forgetting=0.5)
        np.testing.assert_allclose(w, np.array([0.25, 0.5, 1.0]) / 1.75)

    def test_history_weights_window_with_boundary(self):
        np.testing.assert_allclose(history_weights(4, "window", window=2), [0, 0, 0, 0.5, 0.5])
        # only one snapshot available: full weight on it
        np.testing.assert_allclose(history_weights(0, "window", window=3), [1.0])

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            history_weights(1, "bogus")

    def test_blend_hand_computed(self):
        # triangle then single edge; the flat average halves the edges seen
        # only once (the triangle is chosen over a path to avoid the tied
        # eigenvalue magnitudes of bipartite graphs)
        a0 = np.zeros((3, 3))
        for i, j in ((0, 1), (0, 2), (1, 2)):
            a0[i, j] = a0[j, i] = 1.0
        a1 = np.zeros((3, 3))
        a1[0, 1] = a1[1, 0] = 1.0
        blend = np.array([[0.0, 1.0, 0.5], [1.0, 0.0, 0.5], [0.5, 0.5, 0.0]])
        series = GraphSeries(snapshots=[sp.csr_matrix(a0), sp.csr_matrix(a1)])
        emb = separate_embed(series, 3, scheme="constant")
        p = emb.points[1]
        signs = np.array([np.sign(p[:, j] @ blend @ p[:, j]) for j in range(3)])
        np.testing.assert_allclose(p @ np.diag(signs) @ p.T, blend, atol=1e-10)

    def test_first_snapshot_unsmoothed(self):
        series = random_series(17, t=3)
        sep = separate_embed(series, 4, scheme="exponential", forgetting=0.3)
        solo = independent_ase(series, 4)
        np.testing.assert_allclose(sep.points[0], solo.points[0], atol=1e-12)


class TestSelectDimension:
    def test_recovers_clear_elbow(self):
        s = np.concatenate([np.array([10.0, 9.5, 9.0, 8.8]), 0.5 * np.ones(30)])
        d, curve = select_dimension(s)
        assert d == 4
        assert curve.shape == (33,)

    def test_needs_two_values(self):
        with pytest.raises(ValueError):
            select_dimension(np.array([1.0]))


class TestEmbeddingContainer:
    def test_save_load_round_trip(self, tmp_path):
        series = random_series(19, t=2)
        emb = omnibus_embed(series, 3)
        emb.save(tmp_path / "emb")
        back = Embedding.load(tmp_path / "emb")
        assert back.method == emb.method
        assert back.signatures == emb.signatures
        for a, b in zip(emb.points, back.points):
            np.testing.assert_array_equal(a, b)

    def test_stacked_requires_common_dim(self):
        series = random_series(23, t=2)
        emb = independent_ase(series, [3, 2])
        with pytest.raises(ValueError):
            emb.stacked()


def series_strategy(min_n=6, max_n=10, max_t=3):
    return st.tuples(
        st.integers(min_value=0, max_value=10_000),
        st.integers(min_value=min_n, max_value=max_n),
        st.integers(min_value=1, max_value=max_t),
    )


@settings(max_examples=100, deadline=None)
@given(series_strategy(), st.integers(min_value=0, max_value=10_000))
def test_property_permutation_equivariance(params, perm_seed):
    seed, n, t = params
    series = random_series(seed, n=n, t=t, p=0.5)
    unfolded = series.unfold().toarray()
    s_full = np.linalg.svd(unfolded, compute_uv=False)
    d = 2
    # skip spectrally degenerate draws: tiny gaps make the truncated basis
    # ill conditioned and the comparison meaningless
    assume(s_full[d - 1] > 1e-3)
    # every consecutive gap among the kept components must be clear, or the
    # component order itself is permutation dependent
    for j in range(d):
        assume(s_full[j] - s_full[j + 1] > 1e-3 * s_full[0])
    emb = uase(series, d)
    for j in range(d):
        col = np.abs(emb.left[:, j]) / np.sqrt(emb.left[:, j] @ emb.left[:, j])
        top2 = np.sort(col)[-2:]
        assume(top2[1] - top2[0] > 1e-3)

    perm = np.random.default_rng(perm_seed).permutation(n)
    emb_p = uase(series.permute(perm), d)
    for t_idx in range(t):
        np.testing.assert_allclose(
            emb_p.points[t_idx], emb.points[t_idx][perm], atol=1e-6
        )
    np.testing.assert_allclose(emb_p.left, emb.left[perm], atol=1e-6)


@settings(max_examples=100, deadline=None)
@given(series_strategy(), st.integers(min_value=0, max_value=5))
def test_property_isolated_node_maps_to_origin(params, node_pick):
    # a node with no edges in a snapshot contributes a zero column to the
    # unfolded matrix, so its point in that snapshot is the origin
    seed, n, t = params
    series = random_series(seed, n=n, t=t, p=0.5)
    node = node_pick % n
    snaps = [a.toarray() for a in series.snapshots]
    snaps[-1][node, :] = 0.0
    snaps[-1][:, node] = 0.0
    series = GraphSeries(snapshots=[sp.csr_matrix(a) for a in snaps])
    unfolded = series.unfold().toarray()
    s_full = np.linalg.svd(unfolded, compute_uv=False)
    d = 2
    assume(s_full[d - 1] > 1e-3)
    emb = uase(series, d)
    scale = np.sqrt(emb.points[-1].shape[0]) * max(np.linalg.norm(emb.points[-1]), 1.0)
    assert np.linalg.norm(emb.points[-1][node]) < 1e-8 * scale
