import io

import numpy as np
import pytest

from agegraph.errors import DataError
from agegraph.graph import Graph
from agegraph.homophily import (AgeMatrix, communication_matrix, gap_profile,
                                homophily_matrices, labeled_edges, linked_age_regression,
                                log_difference, log_difference_summary, null_matrix, read_matrix,
                                shuffle_ages, write_gap_profile, write_matrix)
from agegraph.rng import stream
from agegraph.synth import Kernel, Pyramid, SynthConfig, generate

NAN = np.nan


def pair_graph(u, v, n):
    return Graph.from_index_edges(n, u, v)


def clique(k):
    u, v = np.triu_indices(k, 1)
    return pair_graph(u, v, k)


# ------------------------------------------------------------------ C matrix


def test_single_same_age_edge():
    C = communication_matrix(pair_graph([0], [1], 2), [30, 30])
    assert C.at(30, 30) == 2 and C.total == 2


def test_single_cross_age_edge():
    C = communication_matrix(pair_graph([0], [1], 2), [30, 55])
    assert C.at(30, 55) == 1 and C.at(55, 30) == 1 and C.total == 2
    assert C.ages[0] == 30 and C.ages[-1] == 55


def test_clique_of_forty_year_olds():
    C = communication_matrix(clique(4), [40] * 4)
    assert C.at(40, 40) == 12


def test_unlabeled_endpoints_excluded():
    g = pair_graph([0, 1, 2], [1, 2, 3], 4)
    C = communication_matrix(g, [20, NAN, 21, 22])
    assert C.total == 2 and C.at(21, 22) == 1
    au, av = labeled_edges(g, [20, NAN, 21, 22])
    assert au.tolist() == [21] and av.tolist() == [22]


def test_age_range_checks():
    g = pair_graph([0], [1], 2)
    with pytest.raises(DataError):
        communication_matrix(g, [30, 70], age_range=(20, 60))
    with pytest.raises(DataError):
        communication_matrix(g, [NAN, NAN])
    with pytest.raises(DataError):
        communication_matrix(g, [30])


# ------------------------------------------------------------------ R matrix


def test_null_matrix_formula():
    R = null_matrix([20, 20, 21, 21, 21], 10)
    assert R.at(20, 21) == pytest.approx(2.4, abs=1e-12)
    assert R.at(21, 20) == pytest.approx(2.4, abs=1e-12)
    assert R.total == pytest.approx(10)


def test_null_matrix_uniform_and_single_age():
    R = null_matrix([20, 21, 22, 23], 8)
    assert np.allclose(R.values, 0.5)
    R = null_matrix([33, 33, 33, NAN], 6)
    assert R.values.tolist() == [[6.0]]


def test_log_difference_zero_when_equal():
    m = AgeMatrix(np.arange(3), np.arange(9.0).reshape(3, 3))
    assert np.array_equal(log_difference(m, m).values, np.zeros((3, 3)))
    with pytest.raises(DataError):
        log_difference(m, AgeMatrix(np.arange(1, 4), m.values))


def _synth(scale=5.0, n=4000, seed=3, **kw):
    return generate(SynthConfig(n=n, mean_degree=6, kernel=Kernel(scale=scale, **kw),
                                rng_seed=seed))


def test_matrices_symmetric_and_mass_matches():
    sg = _synth()
    Cm, Rm, delta = homophily_matrices(sg.graph, sg.ages)
    assert np.array_equal(Cm.values, Cm.values.T)
    assert np.allclose(Rm.values, Rm.values.T)
    assert Cm.total == 2 * sg.graph.edge_count
    assert abs(Rm.total - Cm.total) < 1e-6
    s = log_difference_summary(delta)
    assert s["diag_mean"] > s["offdiag_mean"]


def test_log_difference_invariant_under_edge_duplication():
    sg = _synth(n=600)
    g, ages = sg.graph, sg.ages
    u, v, _ = g.undirected_edges()
    # two disjoint copies: the edge mass and the age census both double
    doubled = pair_graph(np.concatenate([u, u + g.n]), np.concatenate([v, v + g.n]), 2 * g.n)
    ages2 = np.concatenate([ages, ages])
    with np.errstate(divide="ignore", invalid="ignore"):
        a = homophily_matrices(g, ages, eps=0.0)[2].values
        b = homophily_matrices(doubled, ages2, eps=0.0)[2].values
    assert np.array_equal(np.isfinite(a), np.isfinite(b))
    finite = np.isfinite(a)
    assert np.allclose(a[finite], b[finite], atol=1e-12)


def test_summary_weighted():
    d = AgeMatrix(np.arange(2), np.array([[1.0, -1.0], [-1.0, 3.0]]))
    s = log_difference_summary(d, AgeMatrix(np.arange(2), np.array([[1.0, 0.0], [0.0, 3.0]])))
    assert s == {"mean_abs": 1.5, "diag_mean": 2.0, "offdiag_mean": -1.0,
                 "weighted_mean_abs": 2.5}


# --------------------------------------------------------------------- gaps


def test_gap_profile_examples():
    p = gap_profile(pair_graph([0], [1], 2), [30, 55])
    assert p.counts[25] == 1 and p.total == 1
    p = gap_profile(clique(5), [44] * 5)
    assert p.counts.tolist() == [10]


def test_gap_total_equals_labeled_edges():
    sg = _synth(n=2000)
    ages = sg.ages.copy()
    ages[::3] = NAN
    assert gap_profile(sg.graph, ages).total == labeled_edges(sg.graph, ages)[0].size


def test_generational_bump_shows_in_gap_profile():
    sg = generate(SynthConfig(n=20_000, mean_degree=8, pyramid=Pyramid(kind="uniform"),
                              kernel=Kernel(scale=3.0, bump_weight=0.3, bump_at=25.0),
                              rng_seed=11))
    counts = gap_profile(sg.graph, sg.ages).counts.astype(float)
    smooth = np.convolve(counts, np.ones(3) / 3, mode="same")
    window = smooth[15:36]
    peak = 15 + int(np.argmax(window))
    assert abs(peak - 25) <= 2
    assert smooth[peak] > smooth[peak - 6] and smooth[peak] > smooth[peak + 6]


# --------------------------------------------------------------- regression


def test_regression_perfectly_assortative():
    g = pair_graph([0, 2, 4], [1, 3, 5], 6)
    r = linked_age_regression(g, [20, 20, 30, 30, 45, 45])
    assert r.r == pytest.approx(1.0) and r.slope == pytest.approx(1.0)
    assert r.intercept == pytest.approx(0.0, abs=1e-9) and r.n_pairs == 6


def test_regression_errors():
    with pytest.raises(DataError):
        linked_age_regression(pair_graph([0], [1], 2), [20, 30])
    with pytest.raises(DataError):
        linked_age_regression(clique(3), [25, 25, 25])


def test_regression_synth_vs_shuffled():
    sg = _synth(n=10_000, seed=5)
    assert sg.graph.edge_count >= 10_000 * 6 / 2 * 0.95
    assert linked_age_regression(sg.graph, sg.ages).r > 0.8
    shuffled = shuffle_ages(sg.ages, stream(5, "shuffle"))
    assert abs(linked_age_regression(sg.graph, shuffled).r) < 0.1


def test_shuffle_keeps_multiset_and_label_set():
    ages = np.array([20, NAN, 30, 40, NAN, 50.0])
    out = shuffle_ages(ages, np.random.default_rng(0))
    assert np.array_equal(np.isnan(out), np.isnan(ages))
    assert sorted(out[~np.isnan(out)]) == [20, 30, 40, 50]


# ----------------------------------------------------------------------- I/O


def test_matrix_io_roundtrip():
    m = AgeMatrix(np.array([18, 19]), np.array([[1.5, 0.25], [0.25, 3.0]]))
    buf = io.StringIO()
    write_matrix(buf, m)
    assert buf.getvalue().splitlines()[0] == "age\t18\t19"
    back = read_matrix(io.StringIO(buf.getvalue()))
    assert np.array_equal(back.ages, m.ages) and np.allclose(back.values, m.values)
    buf = io.StringIO()
    write_gap_profile(buf, gap_profile(pair_graph([0], [1], 2), [30, 32]))
    assert buf.getvalue() == "delta\tlinks\n0\t0\n1\t0\n2\t1\n"
