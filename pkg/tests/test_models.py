import numpy as np
import pytest
from scipy import stats

from dynembed.models import (
    DsbmSpec,
    bundled_config_path,
    load_dsbm_config,
    sample_adjacency,
    sample_dsbm,
)


@pytest.fixture(scope="module")
def fourblock():
    return load_dsbm_config(bundled_config_path("fourblock"))


class TestSpecValidation:
    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError):
            DsbmSpec(block_matrices=[np.array([[0.1, 0.2], [0.3, 0.1]])], n_nodes=4)

    def test_out_of_range_probability_rejected(self):
        with pytest.raises(ValueError):
            DsbmSpec(block_matrices=[np.array([[1.5]])], n_nodes=4)

    def test_bad_memberships_rejected(self):
        with pytest.raises(ValueError):
            DsbmSpec(
                block_matrices=[np.eye(2) * 0.5],
                n_nodes=3,
                memberships=np.array([0, 1, 2]),
            )

    def test_default_memberships_equal_blocks(self):
        spec = DsbmSpec(block_matrices=[np.eye(4) * 0.5], n_nodes=100)
        counts = np.bincount(spec.memberships[0])
        np.testing.assert_array_equal(counts, [25, 25, 25, 25])

    def test_rho_weight_overflow_rejected(self):
        spec = DsbmSpec(
            block_matrices=[np.array([[0.9]])],
            n_nodes=2,
            degree_weights=np.array([2.0, 2.0]),
        )
        with pytest.raises(ValueError):
            spec.gram_matrix(0)


class TestGramMatrix:
    def test_direct_evaluation_oracle(self, fourblock):
        # oracle: elementwise evaluation straight from the definition
        spec = DsbmSpec(
            block_matrices=fourblock.block_matrices,
            n_nodes=20,
            rho=0.7,
            degree_weights=np.linspace(0.5, 1.0, 20),
        )
        for t in range(2):
            p = spec.gram_matrix(t)
            z = spec.memberships[t]
            w = spec.degree_weights
            for i in range(20):
                for j in range(20):
                    expected = 0.7 * w[i] * w[j] * spec.block_matrices[t][z[i], z[j]]
                    assert abs(p[i, j] - expected) < 1e-15

    def test_known_entry(self, fourblock):
        # community 1 vs community 3 probability in the first snapshot
        assert fourblock.block_matrices[0][0, 2] == 0.18

    def test_degree_corrected_rows_proportional(self, fourblock):
        n = 8
        w = np.ones(n)
        w[1] = 2.0 * w[0]
        spec = DsbmSpec(
            block_matrices=[0.2 * np.ones((1, 1))],
            n_nodes=n,
            memberships=np.zeros(n, dtype=int),
            degree_weights=w,
            rho=0.5,
        )
        p = spec.gram_matrix(0)
        np.testing.assert_allclose(p[1], 2.0 * p[0], atol=1e-15)


class TestSampling:
    def test_symmetric_hollow_binary(self):
        p = np.full((30, 30), 0.4)
        a = sample_adjacency(p, seed=0).toarray()
        np.testing.assert_array_equal(a, a.T)
        np.testing.assert_array_equal(np.diag(a), 0.0)
        assert set(np.unique(a)).issubset({0.0, 1.0})

    def test_deterministic_per_seed_and_stream(self):
        p = np.full((20, 20), 0.3)
        a1 = sample_adjacency(p, seed=7, stream=2)
        a2 = sample_adjacency(p, seed=7, stream=2)
        b = sample_adjacency(p, seed=7, stream=3)
        assert (a1 != a2).nnz == 0
        assert (a1 != b).nnz > 0

    def test_block_densities_match_probabilities(self, fourblock):
        # binomial standard error bound: each block pair has >= 62500 node
        # pairs, so 4 standard errors is far below 0.01
        spec = DsbmSpec(block_matrices=fourblock.block_matrices, n_nodes=1000)
        series = sample_dsbm(spec, seed=11)
        z = spec.memberships[0]
        for t in range(2):
            a = series.snapshots[t].toarray()
            b = spec.block_matrices[t]
            for k in range(4):
                for l in range(k + 1, 4):
                    mask_k, mask_l = z == k, z == l
                    density = a[np.ix_(mask_k, mask_l)].mean()
                    se = np.sqrt(b[k, l] * (1 - b[k, l]) / (250 * 250))
                    assert abs(density - b[k, l]) < 4 * se + 1e-12

    def test_edge_indicators_unbiased_kolmogorov(self):
        # p-value based distribution check on the per-pair indicator means
        p = np.full((200, 200), 0.25)
        counts = []
        for seed in range(30):
            counts.append(sample_adjacency(p, seed=seed).nnz / 2)
        n_pairs = 200 * 199 / 2
        z = (np.array(counts) - n_pairs * 0.25) / np.sqrt(n_pairs * 0.25 * 0.75)
        _, p_value = stats.kstest(z, "norm")
        assert p_value > 1e-4

    def test_expected_rank_bound(self, fourblock):
        spec = DsbmSpec(block_matrices=fourblock.block_matrices, n_nodes=60)
        grams = spec.gram_matrices()
        assert np.linalg.matrix_rank(np.hstack(grams), tol=1e-10) == 4
        assert np.linalg.matrix_rank(grams[0], tol=1e-10) == 4
        assert np.linalg.matrix_rank(grams[1], tol=1e-10) == 3


class TestConfig:
    def test_bundled_fourblock_contents(self, fourblock):
        assert fourblock.n_nodes == 1000
        assert fourblock.n_communities == 4
        assert fourblock.n_snapshots == 2
        np.testing.assert_allclose(
            fourblock.block_matrices[1][0], fourblock.block_matrices[1][1]
        )

    def test_config_round_trip(self, tmp_path):
        text = """
[model]
n_nodes = 6
rho = 0.5
memberships = 0 0 1 1 0 1
degree_weights = 1 1 1 1 2 2

[snapshot.2]
block_matrix =
    0.3 0.1
    0.1 0.4

[snapshot.1]
block_matrix =
    0.2 0.1
    0.1 0.2
"""
        path = tmp_path / "model.cfg"
        path.write_text(text, encoding="utf-8")
        spec = load_dsbm_config(path)
        assert spec.n_nodes == 6
        assert spec.rho == 0.5
        # sections ordered by numeric suffix, not file position
        assert spec.block_matrices[0][0, 0] == 0.2
        assert spec.block_matrices[1][1, 1] == 0.4
        np.testing.assert_array_equal(spec.memberships[0], [0, 0, 1, 1, 0, 1])
        np.testing.assert_array_equal(spec.degree_weights, [1, 1, 1, 1, 2, 2])

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dsbm_config(tmp_path / "absent.cfg")

    def test_unknown_bundle(self):
        with pytest.raises(FileNotFoundError):
            bundled_config_path("no-such-model")
