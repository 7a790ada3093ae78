import numpy as np
import pytest

from tarif.errors import DegenerateInputError, GraphParseError, StratificationError
from tarif.graphs import (
    SbmSpec,
    edge_homophily,
    generate_sbm,
    induced_subgraph,
    load_edge_list,
    load_graph,
    looped_adjacency,
    save_graph,
    split,
)
from tarif.linalg import scatter_trace


def write_graph_files(tmp_path, edges, features, labels):
    edge_path = tmp_path / "edges.txt"
    edge_path.write_text("".join(f"{a} {b}\n" for a, b in edges))
    feat_path = tmp_path / "features.csv"
    feat_path.write_text("".join(",".join(str(v) for v in row) + "\n" for row in features))
    label_path = tmp_path / "labels.txt"
    label_path.write_text("".join(f"{y}\n" for y in labels))
    return edge_path, feat_path, label_path


class TestLoadEdgeList:
    def test_triangle_degrees(self, tmp_path):
        paths = write_graph_files(tmp_path, [(0, 1), (1, 2), (2, 0)],
                                  np.eye(3), [0, 1, 0])
        g = load_edge_list(*paths)
        assert g.n == 3
        assert np.array_equal(g.degrees(), [2, 2, 2])

    def test_duplicate_edges_deduplicated(self, tmp_path):
        paths = write_graph_files(tmp_path, [(0, 1), (0, 1), (1, 0)],
                                  np.eye(2), [0, 1])
        g = load_edge_list(*paths)
        assert g.num_edges == 1

    def test_path_graph_offsets(self, tmp_path):
        paths = write_graph_files(tmp_path, [(0, 1), (1, 2), (2, 3), (3, 4)],
                                  np.eye(5), [0, 1, 0, 1, 0])
        g = load_edge_list(*paths)
        assert np.array_equal(g.csr_offsets, [0, 1, 3, 5, 7, 8])

    def test_out_of_range_id_reports_line(self, tmp_path):
        paths = write_graph_files(tmp_path, [(0, 1), (0, 9)], np.eye(2), [0, 1])
        with pytest.raises(GraphParseError, match=":2"):
            load_edge_list(*paths)

    def test_ragged_features_rejected(self, tmp_path):
        edge_path = tmp_path / "e.txt"
        edge_path.write_text("0 1\n")
        feat_path = tmp_path / "f.csv"
        feat_path.write_text("1.0,2.0\n3.0\n")
        label_path = tmp_path / "l.txt"
        label_path.write_text("0\n1\n")
        with pytest.raises(GraphParseError, match=":2"):
            load_edge_list(edge_path, feat_path, label_path)

    def test_bad_label_rejected(self, tmp_path):
        paths = write_graph_files(tmp_path, [(0, 1)], np.eye(2), [0, 1])
        paths[2].write_text("0\nx\n")
        with pytest.raises(GraphParseError, match=":2"):
            load_edge_list(*paths)


class TestGenerateSbm:
    def test_degenerate_probabilities_give_disjoint_cliques(self):
        g = generate_sbm(SbmSpec(n=4, k=2, p_in=1.0, p_out=0.0, feature_dim=2,
                                 mean_scale=1.0, sigma=0.0, seed=1))
        for i in range(4):
            for j in g.neighbors(i):
                assert g.labels[i] == g.labels[j]
        # every node links to all same-class peers
        counts = np.bincount(g.labels)
        assert np.array_equal(np.sort(g.degrees()), np.sort(counts[g.labels] - 1))
        # features sit exactly on the two orthogonal means
        means = np.zeros((2, 2))
        means[[0, 1], [0, 1]] = 1.0
        assert np.array_equal(g.features, means[g.labels])

    def test_noiseless_scatter_closed_form(self):
        spec = SbmSpec(n=40, k=4, p_in=0.3, p_out=0.1, feature_dim=6,
                       mean_scale=1.7, sigma=0.0, seed=2)
        g = generate_sbm(spec)
        expected = spec.mean_scale ** 2 * (spec.k - 1) / spec.k
        assert scatter_trace(g.features, g.labels) == pytest.approx(expected, rel=1e-12)

    def test_same_seed_identical(self):
        spec = SbmSpec(n=30, k=3, p_in=0.2, p_out=0.05, feature_dim=4, seed=9)
        a, b = generate_sbm(spec), generate_sbm(spec)
        assert np.array_equal(a.csr_targets, b.csr_targets)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)

    def test_edge_count_near_binomial_expectation(self):
        n, p = 40, 0.15
        pairs = n * (n - 1) / 2
        counts = []
        for seed in range(20):
            g = generate_sbm(SbmSpec(n=n, k=2, p_in=p, p_out=p, feature_dim=3, seed=seed))
            counts.append(g.num_edges)
        sd = np.sqrt(pairs * p * (1 - p))
        assert abs(np.mean(counts) - pairs * p) < 4 * sd

    def test_empirical_class_means_converge(self):
        spec = SbmSpec(n=400, k=4, p_in=0.05, p_out=0.05, feature_dim=8,
                       mean_scale=2.0, sigma=0.5, seed=3)
        g = generate_sbm(spec)
        for c in range(4):
            members = g.features[g.labels == c]
            mu_hat = members.mean(axis=0)
            mu = np.zeros(8)
            mu[c] = 2.0
            tol = 4 * spec.sigma / np.sqrt(members.shape[0])
            assert np.all(np.abs(mu_hat - mu) < 4 * tol)

    def test_k_greater_than_d_rejected(self):
        with pytest.raises(DegenerateInputError):
            SbmSpec(n=10, k=5, p_in=0.5, p_out=0.5, feature_dim=3)

    def test_homophily_regimes(self):
        homo = generate_sbm(SbmSpec(n=60, k=3, p_in=0.4, p_out=0.02, feature_dim=4, seed=4))
        hetero = generate_sbm(SbmSpec(n=60, k=3, p_in=0.02, p_out=0.4, feature_dim=4, seed=4))
        assert edge_homophily(homo) > 1 / 3 > edge_homophily(hetero)


class TestSplit:
    def graph(self, n=100, k=4, seed=5):
        return generate_sbm(SbmSpec(n=n, k=k, p_in=0.2, p_out=0.05, feature_dim=6, seed=seed))

    def test_exact_sizes(self):
        g = split(self.graph(), 0.5, 0.25, seed=0)
        assert g.train_mask.sum() == 50
        assert g.val_mask.sum() == 25
        assert g.test_mask.sum() == 25
        assert not np.any(g.train_mask & g.val_mask)

    def test_stratified_within_one(self):
        g = self.graph(n=120, k=3, seed=6)
        s = split(g, 0.6, 0.2, seed=1)
        for c in range(3):
            size = (g.labels == c).sum()
            got = (s.train_mask & (g.labels == c)).sum()
            assert abs(got - size * 0.6) <= 1

    def test_every_class_in_train(self):
        s = split(self.graph(), 0.1, 0.1, seed=2)
        assert np.unique(s.labels[s.train_mask]).size == 4

    def test_same_seed_same_masks(self):
        g = self.graph()
        a, b = split(g, 0.5, 0.25, seed=3), split(g, 0.5, 0.25, seed=3)
        assert np.array_equal(a.train_mask, b.train_mask)
        assert np.array_equal(a.val_mask, b.val_mask)

    def test_tiny_class_rejected(self):
        g = self.graph()
        g.labels[:] = 0
        g.labels[0] = 1  # class 1 has a single node
        with pytest.raises(StratificationError):
            split(g, 0.5, 0.25, seed=0)

    def test_bad_fractions_rejected(self):
        with pytest.raises(DegenerateInputError):
            split(self.graph(), 0.8, 0.3, seed=0)


class TestRoundTrip:
    def test_save_load_identical(self, tmp_path):
        g = split(generate_sbm(SbmSpec(n=50, k=3, p_in=0.3, p_out=0.05,
                                       feature_dim=5, seed=11)), 0.5, 0.25, seed=1)
        save_graph(g, tmp_path / "g")
        h = load_graph(tmp_path / "g")
        assert h.n == g.n
        assert np.array_equal(h.csr_offsets, g.csr_offsets)
        assert np.array_equal(h.csr_targets, g.csr_targets)
        assert np.array_equal(h.features, g.features)
        assert np.array_equal(h.labels, g.labels)
        assert np.array_equal(h.train_mask, g.train_mask)
        assert np.array_equal(h.val_mask, g.val_mask)
        assert np.array_equal(h.test_mask, g.test_mask)


class TestInducedSubgraph:
    def test_path_subgraph(self, tmp_path):
        paths = write_graph_files(tmp_path, [(0, 1), (1, 2), (2, 3), (3, 4)],
                                  np.eye(5), [0, 1, 0, 1, 0])
        g = load_edge_list(*paths)
        sub = induced_subgraph(g, np.array([1, 2, 4]))
        assert sub.n == 3
        assert sub.num_edges == 1  # only the 1-2 edge survives
        assert np.array_equal(sub.labels, [1, 0, 0])


class TestLoopedAdjacency:
    def test_self_loops_present_and_counted(self):
        g = generate_sbm(SbmSpec(n=10, k=2, p_in=0.5, p_out=0.2, feature_dim=3, seed=7))
        adj = looped_adjacency(g)
        assert adj.num_slots == g.csr_targets.size + g.n
        for i in range(g.n):
            seg = adj.targets[adj.offsets[i]:adj.offsets[i + 1]]
            assert i in seg
            assert np.array_equal(np.sort(seg[:-1]), np.sort(g.neighbors(i)))

    def test_scatter_layout_inverts_gather(self):
        g = generate_sbm(SbmSpec(n=8, k=2, p_in=0.6, p_out=0.3, feature_dim=3, seed=8))
        adj = looped_adjacency(g)
        sorted_targets = adj.targets[adj.scatter_perm]
        assert np.all(np.diff(sorted_targets) >= 0)
        counts = np.diff(adj.scatter_offsets)
        assert np.array_equal(counts, np.bincount(adj.targets, minlength=g.n))
