import numpy as np
import pytest

from knobtuner.backends import SyntheticBackend, gen_landscape, make_record
from knobtuner.driver import TuningTask, tune
from knobtuner.errors import DegenerateVarianceError, MismatchedTaskError
from knobtuner.report import (
    ComparisonTable,
    RunData,
    compare_runs,
    curve_csv,
    experiment_metrics,
    measurements_to_reach,
    pca_project,
    projection_csv,
    steps_to_convergence,
    write_report_files,
)
from knobtuner.space import Configuration, DesignSpace, KnobDef

from test_driver import TINY_AGENT, TINY_BOOST, TINY_SA, cube_space


class TestStepsToConvergence:
    def test_stall_after_improvements(self):
        scores = [1.0, 2.0, 3.0] + [3.0] * 8
        assert steps_to_convergence(scores) == 3

    def test_never_stalls_returns_length(self):
        assert steps_to_convergence([1.0, 2.0, 3.0]) == 3
        assert steps_to_convergence(list(range(20))) == 20

    def test_flat_sequence_converges_at_first_step(self):
        assert steps_to_convergence([5.0] * 9) == 1

    def test_custom_window(self):
        assert steps_to_convergence([1.0, 2.0, 1.0, 1.0], window=2) == 2

    def test_late_improvement_resets_the_clock(self):
        scores = [1.0] + [0.5] * 7 + [2.0] + [0.1] * 8
        assert steps_to_convergence(scores) == 9

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            steps_to_convergence([])


class TestMeasurementsToReach:
    def record(self, runtime):
        return make_record(Configuration((0,)), runtime, iteration=0, backend="synthetic", timestamp=0.0)

    def test_first_hit(self):
        records = [self.record(2.0), self.record(1.1), self.record(0.9)]
        assert measurements_to_reach(records, 1.0) == 3

    def test_no_hit(self):
        assert measurements_to_reach([self.record(2.0)], 1.0) is None

    def test_failures_skipped(self):
        records = [self.record(float("inf")), self.record(0.5)]
        assert measurements_to_reach(records, 1.0) == 2


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    space = cube_space(card=8)
    landscape = gen_landscape(space, seed=4, noise_rel=0.02)
    for strategy in ("sa", "sa+as"):
        task = TuningTask(
            space=space, backend_spec="synthetic:fixture", strategy=strategy,
            budget=60, seed=1, agent_params=TINY_AGENT, sa_params=TINY_SA,
            boost_params=TINY_BOOST,
        )
        tune(task, root / strategy, backend=SyntheticBackend(landscape))
    return [RunData.from_dir(root / "sa"), RunData.from_dir(root / "sa+as")]


class TestCompareRuns:
    def test_identical_runs_zero_deltas(self, two_runs):
        run = two_runs[0]
        table = compare_runs([run, run], oracle_runtime=0.5)
        assert table.rows[0] == table.rows[1]

    def test_single_run_rejected(self, two_runs):
        with pytest.raises(MismatchedTaskError, match="at least 2"):
            compare_runs(two_runs[:1])

    def test_mismatched_seed_rejected(self, two_runs):
        import dataclasses
        other = dataclasses.replace(two_runs[1], seed=99)
        with pytest.raises(MismatchedTaskError, match="seed"):
            compare_runs([two_runs[0], other])

    def test_mismatched_space_rejected(self, two_runs):
        import dataclasses
        other = dataclasses.replace(two_runs[1], space_name="different")
        with pytest.raises(MismatchedTaskError, match="space_name"):
            compare_runs([two_runs[0], other])

    def test_gap_against_oracle(self, two_runs):
        oracle = min(r.best_runtime_s for r in two_runs) * 0.5
        table = compare_runs(two_runs, oracle_runtime=oracle)
        for run, row in zip(two_runs, table.rows):
            assert row.optimality_gap == pytest.approx((run.best_runtime_s - oracle) / oracle)
        assert all(row.optimality_gap > 0 for row in table.rows)

    def test_csv_shape(self, two_runs):
        text = compare_runs(two_runs).to_csv()
        lines = text.strip().split("\n")
        assert lines[0].startswith("#")
        assert lines[1].split(",")[0] == "strategy"
        assert len(lines) == 4
        assert lines[2].split(",")[0] == "sa"
        # gap column empty when no oracle given
        assert lines[2].endswith(",")

    def test_text_alignment(self, two_runs):
        text = compare_runs(two_runs).to_text()
        lines = text.strip().split("\n")
        assert len(lines) == 3
        assert lines[0].index("measurements_used") == lines[1].index(str(two_runs[0].measurements_used))

    def test_rundata_round_trip_fields(self, two_runs):
        run = two_runs[0]
        assert run.strategy == "sa"
        assert run.measurements_used == len(run.records) == 60
        assert run.best_runtime_s == min(r.runtime_s for r in run.records if not r.failed)
        assert run.wall_time_s() == 0.0


def reference_silhouette(points: np.ndarray, labels: np.ndarray) -> float:
    n = len(points)
    dist = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    scores = []
    for i in range(n):
        same = labels == labels[i]
        same[i] = False
        a = dist[i][same].mean()
        b = dist[i][~(labels == labels[i])].mean()
        scores.append((b - a) / max(a, b))
    return float(np.mean(scores))


class TestPcaProject:
    def test_two_d_projection_preserves_distances(self):
        rng = np.random.default_rng(3)
        pts = np.column_stack([rng.integers(0, 30, 40), rng.integers(0, 6, 40)])
        configs = [Configuration(tuple(int(v) for v in p)) for p in pts]
        proj = np.array(pca_project(configs))
        for i in range(0, 40, 7):
            for j in range(1, 40, 11):
                orig = np.linalg.norm(pts[i] - pts[j])
                new = np.linalg.norm(proj[i] - proj[j])
                assert new == pytest.approx(orig, abs=1e-6)

    def test_two_distinct_points_separate(self):
        proj = pca_project([Configuration((0, 0, 0)), Configuration((4, 2, 1))])
        assert proj[0][0] != pytest.approx(proj[1][0], abs=1e-9)

    def test_eight_d_clusters_stay_separated(self):
        rng = np.random.default_rng(12)
        points, labels = [], []
        for label, base in enumerate((2, 12)):
            center = np.full(8, base)
            for _ in range(50):
                jitter = rng.integers(-1, 2, size=8)
                points.append(tuple(int(v) for v in center + jitter))
                labels.append(label)
        configs = [Configuration(p) for p in points]
        proj = np.array(pca_project(configs))
        score = reference_silhouette(proj, np.array(labels))
        assert score > 0.6

    def test_component_variance_ordering(self):
        rng = np.random.default_rng(7)
        pts = np.column_stack([
            rng.integers(0, 40, 60), rng.integers(0, 12, 60), rng.integers(0, 3, 60)
        ])
        proj = np.array(pca_project([Configuration(tuple(int(v) for v in p)) for p in pts]))
        assert proj[:, 0].var() >= proj[:, 1].var()

    def test_identical_points_degenerate(self):
        with pytest.raises(DegenerateVarianceError):
            pca_project([Configuration((1, 1))] * 5)

    def test_collinear_points_project_to_a_line(self):
        configs = [Configuration((i, 2 * i)) for i in range(6)]
        proj = np.array(pca_project(configs))
        assert np.allclose(proj[:, 1], 0.0, atol=1e-8)
        assert len(set(np.round(proj[:, 0], 9))) == 6

    def test_preconditions(self):
        with pytest.raises(ValueError, match="at least 2 conf"):
            pca_project([Configuration((1, 2))])
        with pytest.raises(ValueError, match="at least 2 knobs"):
            pca_project([Configuration((1,)), Configuration((2,))])

    def test_deterministic(self):
        configs = [Configuration((i % 5, (i * 3) % 7, i % 2)) for i in range(30)]
        assert pca_project(configs) == pca_project(configs)


class TestMetricsAndFiles:
    def test_experiment_metrics_bundle(self, two_runs):
        run = two_runs[0]
        metrics = experiment_metrics(
            run.records,
            step_sequences=[[1.0, 2.0] + [2.0] * 8, [3.0] * 9],
            oracle_runtime=run.best_runtime_s,
        )
        assert metrics.steps_per_round == (2, 1)
        assert metrics.measurements == 60
        assert metrics.optimality_gap == 0.0
        assert metrics.curve[-1][1] == pytest.approx(run.best_fitness)

    def test_write_report_files(self, tmp_path, two_runs):
        written = write_report_files(
            tmp_path, two_runs, oracle_runtime=0.5, project_from=two_runs[1]
        )
        names = {p.name for p in written}
        assert names == {"comparison.csv", "curve_sa.csv", "curve_sa_as.csv", "projection.csv"}
        for path in written:
            first = path.read_text().split("\n", 1)[0]
            assert first.startswith("# knobtuner")

    def test_curve_csv_format(self):
        text = curve_csv([(1, 0.5), (2, 1.0)])
        assert text.split("\n")[1] == "measurement_index,best_fitness"
        assert "1,0.5" in text

    def test_projection_csv_format(self):
        configs = [Configuration((1, 2)), Configuration((3, 4))]
        text = projection_csv(configs, [(0.5, -0.5), (1.5, 2.5)])
        lines = text.strip().split("\n")
        assert lines[2] == "1 2,0.5,-0.5"
