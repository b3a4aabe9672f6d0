import sys

import numpy as np
import pytest

from tolalloc import Interval, SampleSet
from tolalloc.evaluator import (
    AbsSum,
    DomainError,
    EvaluatorError,
    ExpCos,
    ExternalEvaluator,
    LinearForm,
    MaxComposite,
    QuadraticBowl,
    Rank2Synthetic,
    TabulatedEvaluator,
    builtin_catalog,
    draw_samples,
    from_config,
    make_builtin,
)

SERVER = "tests/helpers/quadratic_bowl_server.py"


def central_fd(f, mu, h=1e-6):
    mu = np.asarray(mu, dtype=float)
    grad = np.zeros_like(mu)
    for i in range(mu.size):
        step = np.zeros_like(mu)
        step[i] = h
        grad[i] = (f(mu + step) - f(mu - step)) / (2.0 * h)
    return grad


# ---------------------------------------------------------------------------
# Builtin analytic problems
# ---------------------------------------------------------------------------

def test_quadratic_bowl_value_and_gradient():
    bowl = QuadraticBowl(a=[2.0, 3.0], center=[0.5, -1.0])
    mu = np.array([1.5, 1.0])
    assert bowl(mu) == pytest.approx(2.0 * 1.0 + 3.0 * 4.0)
    np.testing.assert_allclose(bowl.gradient(mu), [4.0, 12.0])
    np.testing.assert_allclose(bowl.gradient(mu), central_fd(bowl, mu), rtol=1e-8)


def test_quadratic_bowl_rejects_bad_parameters():
    with pytest.raises(ValueError):
        QuadraticBowl(a=[[1.0]])
    with pytest.raises(ValueError):
        QuadraticBowl(a=[1.0, 2.0], center=[0.0])


def test_abs_sum_value_and_subgradient():
    f = AbsSum(a=[1.0, 2.0])
    assert f([-0.5, 0.25]) == pytest.approx(0.5 + 0.5)
    np.testing.assert_allclose(f.gradient([-0.5, 0.25]), [-1.0, 2.0])
    # At a kink the subgradient component is zero.
    assert f.gradient([0.0, 1.0])[0] == 0.0


def test_exp_cos_matches_formula():
    f = ExpCos()
    mu = np.array([0.3, -0.2])
    assert f(mu) == pytest.approx(np.exp(0.3) * np.cos(-0.2))
    np.testing.assert_allclose(f.gradient(mu), central_fd(f, mu), rtol=1e-8)


def test_rank2_synthetic_is_reproducible_and_separated():
    f = Rank2Synthetic()
    g = Rank2Synthetic()
    mu = np.array([0.31, -0.47])
    assert f(mu) == g(mu)
    model = f.as_separated_model()
    assert model.rank == 2 and model.degree == 3
    assert model(mu) == f(mu)
    np.testing.assert_allclose(f.gradient(mu), central_fd(f, mu), rtol=1e-6)


def test_linear_form():
    f = LinearForm(a=[1.0, -2.0, 0.5])
    assert f([1.0, 1.0, 2.0]) == pytest.approx(0.0)
    np.testing.assert_allclose(f.gradient([9.0, 9.0, 9.0]), [1.0, -2.0, 0.5])


def test_builtin_catalog_and_factory():
    catalog = builtin_catalog()
    assert set(catalog) == {"quadratic-bowl", "abs-sum", "exp-cos", "rank2-synthetic", "linear"}
    bowl = make_builtin("quadratic-bowl", {"a": [1.0, 1.0]})
    assert bowl.dim == 2
    with pytest.raises(KeyError):
        make_builtin("no-such-problem")


# ---------------------------------------------------------------------------
# Tabulated evaluator
# ---------------------------------------------------------------------------

def _grid_samples(fn, axes):
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([m.ravel() for m in mesh])
    values = np.array([fn(p) for p in points])
    return SampleSet(points=points, values=values)


def test_tabulated_reproduces_grid_nodes():
    axes = (np.linspace(-1.0, 1.0, 5), np.linspace(0.0, 2.0, 4))
    samples = _grid_samples(lambda p: p[0] ** 2 + np.sin(p[1]), axes)
    tab = TabulatedEvaluator(samples)
    for point, value in zip(samples.points, samples.values):
        assert tab(point) == pytest.approx(value, abs=1e-14)


def test_tabulated_multilinear_exact_on_affine_data():
    axes = (np.linspace(-1.0, 1.0, 4), np.linspace(-2.0, 2.0, 6))
    samples = _grid_samples(lambda p: 3.0 * p[0] - 0.5 * p[1] + 1.0, axes)
    tab = TabulatedEvaluator(samples, interpolation="multilinear")
    rng = np.random.default_rng(5)
    for _ in range(20):
        mu = rng.uniform([-1.0, -2.0], [1.0, 2.0])
        assert tab(mu) == pytest.approx(3.0 * mu[0] - 0.5 * mu[1] + 1.0, abs=1e-12)


def test_tabulated_nearest_snaps_to_grid_value():
    axes = (np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    samples = _grid_samples(lambda p: 10.0 * p[0] + p[1], axes)
    tab = TabulatedEvaluator(samples, interpolation="nearest")
    assert tab([0.1, 0.1]) == pytest.approx(0.0)
    assert tab([0.9, 0.9]) == pytest.approx(11.0)


def test_tabulated_rejects_non_grid_and_out_of_hull():
    points = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(ValueError, match="tensor-product"):
        TabulatedEvaluator(SampleSet(points=points, values=np.zeros(3)))
    axes = (np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    tab = TabulatedEvaluator(_grid_samples(lambda p: 0.0, axes))
    with pytest.raises(DomainError):
        tab([1.5, 0.5])
    with pytest.raises(ValueError):
        TabulatedEvaluator(SampleSet(points=points, values=np.zeros(3)), interpolation="cubic")


def test_tabulated_csv_roundtrip(tmp_path):
    axes = (np.linspace(0.0, 1.0, 3), np.linspace(0.0, 1.0, 3))
    samples = _grid_samples(lambda p: p[0] * p[1], axes)
    path = tmp_path / "table.csv"
    samples.write_csv(path)
    tab = TabulatedEvaluator.from_csv(path)
    assert tab([0.5, 0.5]) == pytest.approx(0.25, abs=1e-12)


# ---------------------------------------------------------------------------
# External subprocess evaluator
# ---------------------------------------------------------------------------

def test_external_matches_reference_values():
    with ExternalEvaluator([sys.executable, SERVER, "2.0,0.5"], dim=2) as ext:
        ref = QuadraticBowl(a=[2.0, 0.5])
        for mu in ([0.0, 0.0], [1.0, -2.0], [0.3, 0.7]):
            assert ext(mu) == pytest.approx(ref(mu), rel=1e-15)


def test_external_reports_non_numeric_output():
    # Request dimension disagrees with the server's coefficient vector, so the
    # child answers with an error string instead of a number.
    with ExternalEvaluator([sys.executable, SERVER, "1.0"], dim=2) as ext:
        with pytest.raises(EvaluatorError, match="non-numeric"):
            ext([1.0, 2.0])


def test_external_restarts_after_child_death():
    ext = ExternalEvaluator([sys.executable, SERVER, "1.0,1.0"], dim=2)
    try:
        assert ext([1.0, 1.0]) == pytest.approx(2.0)
        ext._proc.kill()
        ext._proc.wait()
        # The next call should transparently restart the child.
        assert ext([2.0, 0.0]) == pytest.approx(4.0)
    finally:
        ext.close()


def test_external_rejects_wrong_arity_and_bad_command():
    ext = ExternalEvaluator([sys.executable, SERVER, "1.0"], dim=1)
    with pytest.raises(ValueError):
        ext([1.0, 2.0])
    ext.close()
    missing = ExternalEvaluator(["/no/such/binary"], dim=1)
    with pytest.raises(EvaluatorError, match="cannot start"):
        missing([0.0])
    with pytest.raises(ValueError):
        ExternalEvaluator(["cat"], dim=0)


def test_external_timeout():
    with ExternalEvaluator([sys.executable, "-c", "import time; time.sleep(30)"],
                           dim=1, timeout_seconds=0.2) as ext:
        with pytest.raises(EvaluatorError, match="timed out"):
            ext([1.0])


# ---------------------------------------------------------------------------
# Max composite
# ---------------------------------------------------------------------------

def test_max_composite_value_and_gradient_follow_attaining_branch():
    comp = MaxComposite([LinearForm([1.0, 0.0]), LinearForm([0.0, 1.0])])
    assert comp([2.0, 1.0]) == pytest.approx(2.0)
    np.testing.assert_allclose(comp.gradient([2.0, 1.0]), [1.0, 0.0])
    assert comp([1.0, 3.0]) == pytest.approx(3.0)
    np.testing.assert_allclose(comp.gradient([1.0, 3.0]), [0.0, 1.0])


def test_max_composite_tie_takes_lowest_index():
    comp = MaxComposite([LinearForm([0.0, 1.0]), LinearForm([1.0, 0.0])])
    np.testing.assert_allclose(comp.gradient([1.0, 1.0]), [0.0, 1.0])


def test_max_composite_validates_children():
    with pytest.raises(ValueError):
        MaxComposite([])
    with pytest.raises(ValueError, match="dim"):
        MaxComposite([LinearForm([1.0]), LinearForm([1.0, 2.0])])


# ---------------------------------------------------------------------------
# Config factory
# ---------------------------------------------------------------------------

def test_from_config_builtin_and_max():
    spec = {
        "variant": "max",
        "children": [
            {"variant": "builtin", "name": "linear", "parameters": {"a": [1.0, 0.0]}},
            {"variant": "builtin", "name": "quadratic-bowl", "parameters": {"a": [1.0, 1.0]}},
        ],
    }
    comp = from_config(spec)
    assert comp.dim == 2
    assert comp([0.5, 0.0]) == pytest.approx(0.5)
    assert comp([2.0, 0.0]) == pytest.approx(4.0)


def test_from_config_tabulated_and_external(tmp_path):
    axes = (np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    samples = _grid_samples(lambda p: p[0] + p[1], axes)
    path = tmp_path / "grid.csv"
    samples.write_csv(path)
    tab = from_config({"variant": "tabulated", "path": str(path)})
    assert tab([0.5, 0.5]) == pytest.approx(1.0)
    ext = from_config({
        "variant": "external",
        "command": [sys.executable, SERVER, "1.0"],
        "dim": 1,
        "timeout_seconds": 10,
    })
    with ext:
        assert ext([3.0]) == pytest.approx(9.0)
    with pytest.raises(ValueError, match="variant"):
        from_config({"variant": "mystery"})


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def test_draw_samples_deterministic_and_inside_box():
    domain = (Interval(-0.5, 0.5), Interval(1.0, 3.0))
    first = draw_samples(ExpCos(), domain, 64, seed=7)
    second = draw_samples(ExpCos(), domain, 64, seed=7)
    np.testing.assert_array_equal(first.points, second.points)
    np.testing.assert_array_equal(first.values, second.values)
    assert np.all(first.points[:, 0] >= -0.5) and np.all(first.points[:, 0] <= 0.5)
    assert np.all(first.points[:, 1] >= 1.0) and np.all(first.points[:, 1] <= 3.0)
    different = draw_samples(ExpCos(), domain, 64, seed=8)
    assert not np.array_equal(first.points, different.points)


def test_draw_samples_requires_positive_count():
    with pytest.raises(ValueError):
        draw_samples(ExpCos(), (Interval(-1, 1), Interval(-1, 1)), 0, seed=0)


def test_draw_samples_annotates_failures():
    with ExternalEvaluator([sys.executable, SERVER, "1.0"], dim=2) as ext:
        with pytest.raises(EvaluatorError, match="mu="):
            draw_samples(ext, (Interval(-1, 1), Interval(-1, 1)), 3, seed=0)
