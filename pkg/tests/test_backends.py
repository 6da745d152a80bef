import json
import math
import sys

import pytest

from knobtuner.backends import (
    ExternalBackend,
    MeasurementRecord,
    ReplayBackend,
    SyntheticBackend,
    SyntheticLandscape,
    append_records,
    gen_landscape,
    landscape_from_dict,
    landscape_to_dict,
    load_landscape,
    load_log,
    make_backend,
    make_record,
    measure_batch,
    save_landscape,
    synthetic_runtime,
)
from knobtuner.errors import BackendUnavailableError, LogParseError, SpaceParseError
from knobtuner.space import Configuration, DesignSpace, KnobDef, enumerate_space


def grid(*cards: int) -> DesignSpace:
    knobs = tuple(KnobDef(name=f"k{i}", values=tuple(range(c))) for i, c in enumerate(cards))
    return DesignSpace(name="grid", knobs=knobs)


def flat_landscape(space: DesignSpace) -> SyntheticLandscape:
    center = (0,) * space.n_knobs
    return SyntheticLandscape(seed=0, space=space, centers=(center,), depths=(0.5,), radii=(1.0,))


class TestRecords:
    def test_fitness_is_inverse_runtime(self):
        r = make_record(Configuration((0,)), 0.5, iteration=1, backend="synthetic", timestamp=0.0)
        assert r.fitness == 2.0 and not r.failed

    def test_failed_record_encoding(self):
        r = make_record(Configuration((0,)), -1.0, iteration=0, backend="external", timestamp=0.0)
        assert r.failed and math.isinf(r.runtime_s) and r.fitness == 0.0

    def test_invariant_enforced(self):
        with pytest.raises(ValueError):
            MeasurementRecord(
                config=Configuration((0,)),
                runtime_s=2.0,
                fitness=3.0,
                failed=False,
                iteration=0,
                backend="x",
                timestamp=0.0,
            )


class TestLog:
    def test_roundtrip(self, tmp_path):
        log = tmp_path / "m.jsonl"
        records = [
            make_record(Configuration((1, 2)), 0.25, iteration=0, backend="synthetic", timestamp=3.5),
            make_record(Configuration((0, 0)), math.inf, iteration=0, backend="synthetic", timestamp=3.5),
        ]
        append_records(log, records)
        assert load_log(log) == records

    def test_empty_file(self, tmp_path):
        log = tmp_path / "m.jsonl"
        log.write_text("")
        assert load_log(log) == []

    def test_corrupt_line_three_named(self, tmp_path):
        log = tmp_path / "m.jsonl"
        good = [make_record(Configuration((i,)), 1.0, iteration=0, backend="synthetic", timestamp=0.0) for i in range(3)]
        append_records(log, good[:2])
        with open(log, "a") as fh:
            fh.write("{broken\n")
        with pytest.raises(LogParseError, match="line 3"):
            load_log(log)

    def test_append_only(self, tmp_path):
        log = tmp_path / "m.jsonl"
        backend = SyntheticBackend(flat_landscape(grid(4)))
        measure_batch(backend, [Configuration((0,))], iteration=0, log_path=log, clock=lambda: 0.0)
        first = log.read_bytes()
        measure_batch(backend, [Configuration((1,))], iteration=1, log_path=log, clock=lambda: 0.0)
        assert log.read_bytes().startswith(first)
        assert len(load_log(log)) == 2

    def test_unknown_key_rejected(self, tmp_path):
        log = tmp_path / "m.jsonl"
        obj = {
            "indices": [0],
            "runtime_s": 1.0,
            "fitness": 1.0,
            "failed": False,
            "iteration": 0,
            "backend": "x",
            "timestamp": 0.0,
            "extra": 1,
        }
        log.write_text(json.dumps(obj) + "\n")
        with pytest.raises(LogParseError, match="line 1"):
            load_log(log)


class TestSyntheticLandscape:
    def test_runtime_at_center(self):
        space = grid(10)
        scape = SyntheticLandscape(seed=0, space=space, centers=((4,),), depths=(0.9,), radii=(2.0,), base_runtime=2.0)
        assert synthetic_runtime(scape, Configuration((4,))) == pytest.approx(0.2, rel=1e-12)

    def test_runtime_far_from_center(self):
        space = grid(10)
        scape = SyntheticLandscape(seed=0, space=space, centers=((0,),), depths=(0.9,), radii=(0.5,))
        assert synthetic_runtime(scape, Configuration((9,))) == pytest.approx(1.0, rel=1e-12)

    def test_noise_is_pure_hash(self):
        space = grid(10, 10)
        scape = SyntheticLandscape(
            seed=3, space=space, centers=((5, 5),), depths=(0.5,), radii=(2.0,), noise_rel=0.3
        )
        c = Configuration((2, 8))
        assert synthetic_runtime(scape, c) == synthetic_runtime(scape, c)
        # the relative perturbation stays inside the configured band
        clean = SyntheticLandscape(
            seed=3, space=space, centers=((5, 5),), depths=(0.5,), radii=(2.0,), noise_rel=0.0
        )
        for idx in [(0, 0), (3, 7), (9, 9), (1, 4)]:
            noisy = synthetic_runtime(scape, Configuration(idx))
            base = synthetic_runtime(clean, Configuration(idx))
            assert abs(noisy / base - 1.0) <= 0.3

    def test_runtime_positive_everywhere(self):
        space = grid(6, 6)
        scape = SyntheticLandscape(
            seed=1, space=space, centers=((3, 3),), depths=(0.99,), radii=(3.0,), noise_rel=0.1
        )
        runtimes = [synthetic_runtime(scape, c) for c in enumerate_space(space)]
        assert min(runtimes) >= 0.01 * scape.base_runtime - 1e-15

    def test_depth_sum_must_stay_below_one(self):
        with pytest.raises(ValueError):
            SyntheticLandscape(
                seed=0, space=grid(3), centers=((0,), (1,)), depths=(0.6, 0.5), radii=(1.0, 1.0)
            )

    def test_center_dimension_checked(self):
        with pytest.raises(ValueError):
            SyntheticLandscape(seed=0, space=grid(3, 3), centers=((0,),), depths=(0.5,), radii=(1.0,))

    def test_file_roundtrip(self, tmp_path):
        space = grid(8, 8)
        scape = gen_landscape(space, seed=12, n_centers=3)
        path = tmp_path / "scape.json"
        save_landscape(scape, path)
        assert load_landscape(path, space) == scape

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{}")
        with pytest.raises(SpaceParseError):
            load_landscape(path, grid(3))

    def test_gen_landscape_deterministic_distinct_centers(self):
        space = grid(10, 10, 10)
        a = gen_landscape(space, seed=4, n_centers=4)
        b = gen_landscape(space, seed=4, n_centers=4)
        assert a == b
        assert len(set(a.centers)) == 4
        assert sum(a.depths) < 1.0
        assert landscape_from_dict(landscape_to_dict(a), space) == a


class TestSyntheticBackend:
    def test_same_config_twice_identical(self, tmp_path):
        space = grid(5, 5)
        scape = SyntheticLandscape(
            seed=9, space=space, centers=((2, 2),), depths=(0.5,), radii=(1.5,), noise_rel=0.2
        )
        backend = SyntheticBackend(scape)
        c = Configuration((1, 3))
        records = measure_batch(backend, [c, c], iteration=0, log_path=tmp_path / "log.jsonl")
        assert records[0].runtime_s == records[1].runtime_s

    def test_empty_batch_rejected(self):
        backend = SyntheticBackend(flat_landscape(grid(3)))
        with pytest.raises(ValueError):
            measure_batch(backend, [], iteration=0)


def write_script(tmp_path, body: str) -> str:
    script = tmp_path / "bench.py"
    script.write_text(body)
    return f"{sys.executable} {script}"


ECHO_HALF = """\
import json, sys
batch = json.load(sys.stdin)
out = [sum(k) / 10.0 if sum(k) else -1.0 for k in batch["knobs"]]
print(json.dumps({"runtimes_s": out}))
"""


class TestExternalBackend:
    def test_protocol_and_fitness(self, tmp_path):
        space = DesignSpace("s", (KnobDef("a", (0, 2, 5)),))
        script = write_script(
            tmp_path,
            'import json, sys\n'
            'batch = json.load(sys.stdin)\n'
            'print(json.dumps({"runtimes_s": [0.5, 0.25]}))\n',
        )
        backend = ExternalBackend(script, space)
        records = measure_batch(
            backend, [Configuration((1,)), Configuration((2,))], iteration=0, log_path=tmp_path / "log.jsonl"
        )
        assert [r.fitness for r in records] == [2.0, 4.0]

    def test_knob_values_passed_not_indices(self, tmp_path):
        space = DesignSpace("s", (KnobDef("a", (0, 2, 5)), KnobDef("b", (1, 3))))
        echo = tmp_path / "echo.json"
        script = write_script(
            tmp_path,
            "import json, sys\n"
            "batch = json.load(sys.stdin)\n"
            f"open({str(echo)!r}, 'w').write(json.dumps(batch))\n"
            'print(json.dumps({"runtimes_s": [1.0]}))\n',
        )
        measure_batch(ExternalBackend(script, space), [Configuration((2, 0))], iteration=0)
        assert json.loads(echo.read_text()) == {"knobs": [[5, 1]]}

    def test_negative_runtime_marks_failure(self, tmp_path):
        space = DesignSpace("s", (KnobDef("a", (0, 2)),))
        backend = ExternalBackend(write_script(tmp_path, ECHO_HALF), space)
        records = measure_batch(backend, [Configuration((0,)), Configuration((1,))], iteration=0)
        assert records[0].failed and not records[1].failed

    def test_nonzero_exit_is_batch_failure(self, tmp_path):
        backend = ExternalBackend(write_script(tmp_path, "import sys; sys.exit(3)"), grid(3))
        with pytest.raises(BackendUnavailableError, match="status 3"):
            measure_batch(backend, [Configuration((0,))], iteration=0)

    def test_timeout_is_batch_failure(self, tmp_path):
        script = write_script(tmp_path, "import time; time.sleep(30)")
        backend = ExternalBackend(script, grid(3), timeout_s=0.5)
        with pytest.raises(BackendUnavailableError, match="timed out"):
            measure_batch(backend, [Configuration((0,))], iteration=0)

    def test_malformed_output(self, tmp_path):
        backend = ExternalBackend(write_script(tmp_path, "print('not json')"), grid(3))
        with pytest.raises(BackendUnavailableError, match="malformed"):
            measure_batch(backend, [Configuration((0,))], iteration=0)

    def test_wrong_count(self, tmp_path):
        script = write_script(tmp_path, 'import json; print(json.dumps({"runtimes_s": [1.0, 2.0]}))')
        backend = ExternalBackend(script, grid(3))
        with pytest.raises(BackendUnavailableError, match="returned 2"):
            measure_batch(backend, [Configuration((0,))], iteration=0)

    def test_missing_command(self):
        backend = ExternalBackend("/no/such/binary-xyz", grid(3))
        with pytest.raises(BackendUnavailableError, match="not found"):
            measure_batch(backend, [Configuration((0,))], iteration=0)


class TestReplayBackend:
    def test_replays_runtimes(self, tmp_path):
        log = tmp_path / "m.jsonl"
        records = [
            make_record(Configuration((0,)), 0.5, iteration=0, backend="synthetic", timestamp=0.0),
            make_record(Configuration((2,)), 2.0, iteration=0, backend="synthetic", timestamp=0.0),
        ]
        append_records(log, records)
        backend = ReplayBackend.from_log(log, grid(3))
        out = measure_batch(backend, [Configuration((2,)), Configuration((0,))], iteration=5)
        assert [r.runtime_s for r in out] == [2.0, 0.5]
        assert all(r.backend == "replay" for r in out)

    def test_missing_config(self, tmp_path):
        log = tmp_path / "m.jsonl"
        log.write_text("")
        backend = ReplayBackend.from_log(log, grid(3))
        with pytest.raises(BackendUnavailableError, match="no measurement"):
            measure_batch(backend, [Configuration((1,))], iteration=0)


class TestMakeBackend:
    def test_synthetic_spec(self, tmp_path):
        space = grid(4, 4)
        path = tmp_path / "scape.json"
        save_landscape(gen_landscape(space, seed=1, n_centers=2), path)
        backend = make_backend(f"synthetic:{path}", space)
        assert isinstance(backend, SyntheticBackend)

    def test_replay_spec(self, tmp_path):
        log = tmp_path / "m.jsonl"
        log.write_text("")
        assert isinstance(make_backend(f"replay:{log}", grid(3)), ReplayBackend)

    def test_external_spec(self):
        assert isinstance(make_backend("external:/bin/true", grid(3)), ExternalBackend)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown backend"):
            make_backend("quantum:foo", grid(3))

    def test_missing_argument(self):
        with pytest.raises(ValueError, match="kind:argument"):
            make_backend("synthetic", grid(3))
