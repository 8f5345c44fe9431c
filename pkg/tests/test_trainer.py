import numpy as np
import pytest

from qvd.flowgen import FlowField, VortexParams, make_field
from qvd.seqqvd import DetectionParams, detect_field
from qvd.trainer import (
    LossHistory,
    SearchSpace,
    accuracy,
    bayes_opt,
    grid_lattice,
    grid_search,
    infeasible_penalty,
    mse_loss,
    split_dataset,
    summarize_histories,
)

from conftest import SMALL_LAYOUT, small_dataset_spec

SMALL_SPACE = SearchSpace(alpha_range=(2, 12), beta_range=(1, 4), gamma_range=(0.2, 1.5))


def bump_field(cx=32, cy=32, peak=1.0, width=4.0, with_truth=False):
    """Synthetic field with one Gaussian bump and a configurable ground truth."""
    ys, xs = np.mgrid[0:64, 0:64].astype(float)
    grid = peak * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * width ** 2))
    vortices = [VortexParams(cx, cy, 1.0, 1.0, width, 1)] if with_truth else []
    return FlowField(width=64, height=64, vorticity=grid, vortices=vortices,
                     true_count=len(vortices), seed=0)


@pytest.fixture(scope="module")
def counting_fields():
    spec = small_dataset_spec(10, (1, 3), seed=42)
    return [make_field(spec, i) for i in range(10)]


class TestLosses:
    def test_perfect_detector_zero_mse(self):
        # all-zero fields with zero ground truth: any feasible params are exact
        fields = [FlowField(64, 64, np.zeros((64, 64)), [], 0, 0) for _ in range(3)]
        params = DetectionParams(alpha=4, beta=2.0, gamma=0.5)
        assert mse_loss(fields, params, SMALL_LAYOUT) == 0.0
        assert accuracy(fields, params, SMALL_LAYOUT) == 1.0

    def test_off_by_one_single_field(self):
        f = bump_field()   # one detectable bump, ground truth zero
        params = DetectionParams(alpha=4, beta=2.0, gamma=0.3)
        assert detect_field(f, params, SMALL_LAYOUT).count == 1
        assert mse_loss([f], params, SMALL_LAYOUT) == 1.0
        assert accuracy([f], params, SMALL_LAYOUT) == 0.0

    def test_tuned_params_on_counting_dataset(self, counting_fields):
        best, _ = grid_search(counting_fields, SMALL_SPACE, SMALL_LAYOUT, gamma_steps=6)
        assert mse_loss(counting_fields, best, SMALL_LAYOUT) <= 1.0

    def test_deterministic(self, counting_fields):
        params = DetectionParams(alpha=4, beta=2.0, gamma=0.5)
        a = mse_loss(counting_fields, params, SMALL_LAYOUT)
        b = mse_loss(counting_fields, params, SMALL_LAYOUT)
        assert a == b

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            mse_loss([], DetectionParams(4, 2.0, 0.5), SMALL_LAYOUT)


class TestGridSearch:
    def test_singleton_space(self, counting_fields):
        space = SearchSpace(alpha_range=(4, 4), beta_range=(2, 2), gamma_range=(0.5, 0.5))
        best, table = grid_search(counting_fields, space, SMALL_LAYOUT)
        assert (best.alpha, best.beta, best.gamma) == (4, 2, 0.5)
        assert len(table) == 1

    def test_contains_perfect_point(self):
        fields = [FlowField(64, 64, np.zeros((64, 64)), [], 0, 0)]
        space = SearchSpace(alpha_range=(4, 6), beta_range=(2, 3), gamma_range=(0.5, 0.5))
        best, table = grid_search(fields, space, SMALL_LAYOUT)
        assert min(row[3] for row in table) == 0.0
        assert mse_loss(fields, best, SMALL_LAYOUT) == 0.0

    def test_argmin_consistent_with_reevaluation(self, counting_fields):
        space = SearchSpace(alpha_range=(3, 5), beta_range=(2, 3),
                            gamma_range=(0.3, 0.9))
        best, table = grid_search(counting_fields, space, SMALL_LAYOUT, gamma_steps=3)
        assert len(table) == 3 * 2 * 3
        best_mse = min(row[3] for row in table)
        assert mse_loss(counting_fields, best, SMALL_LAYOUT) == pytest.approx(best_mse)

    def test_every_point_at_least_best(self, counting_fields):
        space = SearchSpace(alpha_range=(4, 6), beta_range=(2, 3), gamma_range=(0.4, 0.8))
        best, table = grid_search(counting_fields, space, SMALL_LAYOUT, gamma_steps=3)
        best_mse = mse_loss(counting_fields, best, SMALL_LAYOUT)
        assert all(row[3] >= best_mse - 1e-12 for row in table)

    def test_tie_break_prefers_small_alpha_then_beta_then_large_gamma(self):
        fields = [FlowField(64, 64, np.zeros((64, 64)), [], 0, 0)]
        space = SearchSpace(alpha_range=(4, 5), beta_range=(2, 3), gamma_range=(0.4, 0.8))
        best, _ = grid_search(fields, space, SMALL_LAYOUT, gamma_steps=3)
        assert best.alpha == 4 and best.beta == 2 and best.gamma == pytest.approx(0.8)

    def test_infeasible_points_get_penalty(self, counting_fields):
        space = SearchSpace(alpha_range=(4, 4), beta_range=(4, 4), gamma_range=(0.5, 0.5))
        # beta=4 at W=16 gives radius 2 < 16/(2*pi) guard
        best, table = grid_search(counting_fields, space, SMALL_LAYOUT)
        assert table[0][3] == infeasible_penalty(counting_fields)


class TestBayesOpt:
    def test_exhaustion_finds_optimum_of_three_point_space(self, counting_fields):
        space = SearchSpace(alpha_range=(4, 6), beta_range=(2, 2), gamma_range=(0.5, 0.5))
        grid_best, table = grid_search(counting_fields[:3], space, SMALL_LAYOUT)
        history = bayes_opt(counting_fields[:3], [], space, epochs=3, seed=0,
                            layout=SMALL_LAYOUT, acquisition="exhaustive")
        assert history.final_train_mse == pytest.approx(min(r[3] for r in table))
        assert history.best_params == grid_best

    def test_matches_grid_search_when_exhaustive(self, counting_fields):
        space = SearchSpace(alpha_range=(3, 5), beta_range=(2, 3), gamma_range=(0.4, 0.4))
        grid_best, table = grid_search(counting_fields, space, SMALL_LAYOUT)
        n_points = len(table)
        history = bayes_opt(counting_fields, [], space, epochs=n_points, seed=1,
                            layout=SMALL_LAYOUT, acquisition="exhaustive")
        assert history.final_train_mse == pytest.approx(min(r[3] for r in table))
        assert history.best_params == grid_best

    def test_best_so_far_non_increasing(self, counting_fields):
        history = bayes_opt(counting_fields[:6], counting_fields[6:], SMALL_SPACE,
                            epochs=8, seed=3, layout=SMALL_LAYOUT)
        diffs = np.diff(history.train_mse)
        assert (diffs <= 1e-12).all()

    def test_degenerate_space_short_circuits(self, counting_fields):
        space = SearchSpace(alpha_range=(4, 4), beta_range=(2, 2), gamma_range=(0.5, 0.5))
        history = bayes_opt(counting_fields, [], space, epochs=10, seed=0,
                            layout=SMALL_LAYOUT)
        assert len(history.epochs) == 1
        assert history.best_params == DetectionParams(4, 2, 0.5)

    def test_epochs_validation(self, counting_fields):
        with pytest.raises(ValueError):
            bayes_opt(counting_fields, [], SMALL_SPACE, epochs=0, seed=0,
                      layout=SMALL_LAYOUT)

    def test_deterministic_given_seed(self, counting_fields):
        a = bayes_opt(counting_fields[:6], counting_fields[6:], SMALL_SPACE,
                      epochs=5, seed=7, layout=SMALL_LAYOUT)
        b = bayes_opt(counting_fields[:6], counting_fields[6:], SMALL_SPACE,
                      epochs=5, seed=7, layout=SMALL_LAYOUT)
        assert a.train_mse == b.train_mse
        assert a.params == b.params

    def test_accuracy_objective(self, counting_fields):
        history = bayes_opt(counting_fields[:6], counting_fields[6:], SMALL_SPACE,
                            epochs=6, seed=5, layout=SMALL_LAYOUT, objective="accuracy")
        assert 0.0 <= history.final_accuracy <= 1.0
        accs = [accuracy(counting_fields[:6],
                         DetectionParams(p.alpha, p.beta, p.gamma), SMALL_LAYOUT)
                for p in history.params]
        assert (np.diff(accs) >= -1e-12).all()


class TestLearningCurve:
    def test_median_accuracy_grows_with_training_size(self):
        spec = small_dataset_spec(60, (1, 3), seed=2025)
        pool = [make_field(spec, i) for i in range(60)]
        test_set = pool[45:]
        sizes = [5, 10, 20, 45]
        medians = []
        for size in sizes:
            accs = []
            for s in range(5):
                history = bayes_opt(pool[:size], test_set, SMALL_SPACE, epochs=8,
                                    seed=[size, s], layout=SMALL_LAYOUT,
                                    objective="accuracy")
                accs.append(history.final_accuracy)
            medians.append(float(np.median(accs)))
        for prev, nxt in zip(medians, medians[1:]):
            assert nxt >= prev - 0.1   # non-decreasing within noise tolerance


class TestSplitAndSummary:
    def test_split_fraction_and_partition(self, counting_fields):
        train, test = split_dataset(counting_fields, 0.75, seed=0)
        assert len(train) + len(test) == len(counting_fields)
        assert abs(len(train) - 7.5) <= 1.5
        ids = {id(f) for f in train} | {id(f) for f in test}
        assert len(ids) == len(counting_fields)

    def test_split_validation(self, counting_fields):
        with pytest.raises(ValueError):
            split_dataset(counting_fields, 1.0, seed=0)

    def test_summarize(self):
        h = LossHistory()
        h.log(0, 2.0, 3.0, 0.1, DetectionParams(4, 2, 0.5))
        h.log(1, 1.0, 2.0, 0.5, DetectionParams(4, 2, 0.7))
        summary = summarize_histories([h, h, h])
        assert summary["train_mse"]["median"] == 1.0
        assert summary["n_seeds"] == 3

    def test_history_csv(self, tmp_path):
        h = LossHistory()
        h.log(0, 2.0, 3.0, 0.1, DetectionParams(4, 2, 0.5))
        h.write_csv(tmp_path / "h.csv")
        lines = (tmp_path / "h.csv").read_text().strip().splitlines()
        assert lines[0] == "epoch,train_mse,test_mse,accuracy,alpha,beta,gamma"
        assert len(lines) == 2


def test_grid_lattice_gamma_singleton():
    space = SearchSpace(alpha_range=(1, 2), beta_range=(1, 1), gamma_range=(0.5, 0.5))
    assert grid_lattice(space, gamma_steps=7) == [(1, 1, 0.5), (2, 1, 0.5)]
