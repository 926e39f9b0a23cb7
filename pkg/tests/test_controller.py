"""Control-loop behavior: registration, collection, phases, durability."""

import pytest

from crosstune.controller import (
    ConflictError,
    Controller,
    FakeClock,
    LoopConfig,
    StaleAckError,
    UnknownPcaError,
    make_snapshot,
    parse_rfc3339,
)
from crosstune.model import Configuration, Direction, MetricSample, SystemState, TuningDirective, ValidationError

TS = "2026-08-16T12:00:00Z"


def manifest(name="app", n_params=2, n_metrics=1, changeability="online", prefix=None):
    prefix = prefix or name
    return {
        "name": name,
        "layer": "test",
        "metrics": [
            {"name": f"{prefix}_m{i}", "direction": "maximize"} for i in range(n_metrics)
        ],
        "parameters": [
            {
                "name": f"{prefix}_p{i}",
                "min": 0,
                "max": 9,
                "step": 1,
                "changeability": changeability,
            }
            for i in range(n_params)
        ],
    }


def fast_controller(tmp_path=None, history=False, **kwargs):
    cfg = LoopConfig(
        cycle_time=0.0,
        snapshot_window=kwargs.pop("snapshot_window", 1),
        settle_cycles=kwargs.pop("settle_cycles", 0),
        history_path=str(tmp_path / "h.jsonl") if history else None,
    )
    clock = FakeClock()
    return Controller(cfg, clock=clock, seed=kwargs.pop("seed", 1), **kwargs), clock


def run_steps(ctrl, clock, pca_ids, metric_fn, n):
    """Drive n full evaluate->publish->ack rounds with every PCA reporting."""
    for _ in range(n):
        clock.advance(1.0)
        for pca_id in pca_ids:
            ctrl.submit_report(pca_id, ctrl.epoch, metric_fn(pca_id, ctrl.published.genes), TS)
        ctrl.tick(clock.now())
        for pca_id in pca_ids:
            ctrl.ack(pca_id, ctrl.epoch)


class TestMakeSnapshot:
    def _state(self, epoch, value):
        d = TuningDirective(direction=Direction.MAXIMIZE)
        return SystemState(
            metrics=(MetricSample(name="m", value=value, directive=d),),
            config=Configuration(genes={"p": 0}, epoch=epoch),
            timestamp=0.0,
        )

    def test_median_odd(self):
        snap = make_snapshot([self._state(1, v) for v in (100, 120, 110)])
        assert snap.metrics["m"] == 110
        assert snap.window == 3

    def test_single_state(self):
        snap = make_snapshot([self._state(1, 42.0)])
        assert snap.metrics["m"] == 42.0

    def test_median_even_mean_of_middle(self):
        snap = make_snapshot([self._state(1, v) for v in (1, 2, 3, 100)])
        assert snap.metrics["m"] == 2.5

    def test_mixed_epochs_rejected(self):
        with pytest.raises(ValidationError):
            make_snapshot([self._state(1, 1.0), self._state(2, 2.0)])


class TestRegistration:
    def test_combined_space(self):
        ctrl, _ = fast_controller()
        ctrl.register(manifest("db", n_params=22, n_metrics=18))
        ctrl.register(manifest("docker", n_params=2, n_metrics=1))
        ctrl.register(manifest("kernel", n_params=9, n_metrics=1))
        assert ctrl.space.dims == 33
        assert len(ctrl.directives) == 20

    def test_duplicate_name_conflict(self):
        ctrl, _ = fast_controller()
        ctrl.register(manifest("app"))
        with pytest.raises(ConflictError):
            ctrl.register(manifest("app"))

    def test_metric_collision_across_pcas(self):
        ctrl, _ = fast_controller()
        ctrl.register(manifest("a"))
        clash = manifest("b")
        clash["metrics"] = [{"name": "a_m0", "direction": "maximize"}]
        with pytest.raises(ConflictError):
            ctrl.register(clash)

    def test_param_collision_across_pcas(self):
        ctrl, _ = fast_controller()
        ctrl.register(manifest("a"))
        clash = manifest("b")
        clash["parameters"] = [{"name": "a_p0", "min": 0, "max": 1, "step": 1}]
        with pytest.raises(ConflictError):
            ctrl.register(clash)

    def test_sensor_only_accepted(self):
        ctrl, _ = fast_controller()
        sensor = manifest("watch", n_params=0, n_metrics=2)
        pca_id, epoch = ctrl.register(sensor)
        assert pca_id == "watch" and epoch == 0
        assert ctrl.phase == "idle"  # no parameters anywhere yet

    def test_invalid_spec_rejected(self):
        ctrl, _ = fast_controller()
        bad = manifest("a")
        bad["parameters"][0]["step"] = 0
        with pytest.raises(ValidationError):
            ctrl.register(bad)

    def test_initial_values_respected(self):
        ctrl, _ = fast_controller()
        m = manifest("a", n_params=1)
        m["parameters"][0]["initial"] = 7
        ctrl.register(m)
        assert ctrl.published.genes["a_p0"] == 7

    def test_midpoint_default_initial(self):
        ctrl, _ = fast_controller()
        ctrl.register(manifest("a", n_params=1))  # 10 values -> index 4
        assert ctrl.published.genes["a_p0"] == 4


class TestLoopStepping:
    def metric(self, pca_id, genes):
        return {f"{pca_id}_m0": float(sum(genes.values()))}

    def test_step_publishes_and_increments_epoch(self):
        ctrl, clock = fast_controller()
        ctrl.register(manifest("app"))
        assert ctrl.phase == "collect"
        run_steps(ctrl, clock, ["app"], self.metric, 5)
        assert ctrl.epoch == 5
        assert ctrl.session.iterations == 5
        assert ctrl.stats()["step_index"] == 5

    def test_partial_state_discarded(self):
        ctrl, clock = fast_controller()
        ctrl.register(manifest("app"))
        ctrl.register(manifest("other"))
        clock.advance(1.0)
        ctrl.submit_report("app", 0, {"app_m0": 1.0}, TS)  # "other" stays silent
        ctrl.tick(clock.now())
        assert ctrl.discarded_cycles == 1
        assert "other (no report in window)" in ctrl.last_discard.missing
        assert ctrl.session.iterations == 0

    def test_stale_epoch_excluded(self):
        ctrl, clock = fast_controller()
        ctrl.register(manifest("app"))
        run_steps(ctrl, clock, ["app"], self.metric, 1)
        assert ctrl.epoch == 1
        clock.advance(1.0)
        ctrl.submit_report("app", 0, {"app_m0": 1.0}, TS)  # pre-publish epoch
        ctrl.tick(clock.now())
        assert ctrl.discarded_cycles == 1
        assert "stale epoch" in ctrl.last_discard.missing[0]

    def test_nonfinite_metric_rejected(self):
        ctrl, _ = fast_controller()
        ctrl.register(manifest("app"))
        with pytest.raises(ValidationError):
            ctrl.submit_report("app", 0, {"app_m0": float("nan")}, TS)

    def test_missing_metric_rejected(self):
        ctrl, _ = fast_controller()
        ctrl.register(manifest("app", n_metrics=2))
        with pytest.raises(ValidationError):
            ctrl.submit_report("app", 0, {"app_m0": 1.0}, TS)

    def test_unknown_pca(self):
        ctrl, _ = fast_controller()
        with pytest.raises(UnknownPcaError):
            ctrl.submit_report("ghost", 0, {}, TS)
        with pytest.raises(UnknownPcaError):
            ctrl.view("ghost")
        with pytest.raises(UnknownPcaError):
            ctrl.ack("ghost", 0)

    def test_future_ack_rejected(self):
        ctrl, _ = fast_controller()
        ctrl.register(manifest("app"))
        with pytest.raises(StaleAckError):
            ctrl.ack("app", 1)

    def test_sensor_only_counts_toward_completeness(self):
        ctrl, clock = fast_controller()
        ctrl.register(manifest("app"))
        ctrl.register(manifest("watch", n_params=0, n_metrics=1))

        def both(pca_id, genes):
            key = f"{pca_id}_m0"
            return {key: float(sum(genes.values()))}

        run_steps(ctrl, clock, ["app", "watch"], both, 3)
        assert ctrl.session.iterations == 3
        assert ctrl.discarded_cycles == 0
        # acks are only required from PCAs that own parameters
        assert ctrl.registrations["watch"].acked_epoch == 3


class TestPhaseMachine:
    def metric(self, pca_id, genes):
        return {"app_m0": float(sum(genes.values()))}

    def test_window_and_settle_sequencing(self):
        cfg = LoopConfig(cycle_time=1.0, snapshot_window=3, settle_cycles=2)
        clock = FakeClock()
        ctrl = Controller(cfg, clock=clock, seed=1)
        ctrl.register(manifest("app"))

        def cycle(expect_phase):
            clock.advance(1.0)
            ctrl.submit_report("app", ctrl.epoch, self.metric("app", ctrl.published.genes), TS)
            ctrl.tick(clock.now())
            assert ctrl.phase == expect_phase

        cycle("collect")
        cycle("collect")
        cycle("await_acks")  # third complete state fills the window, step runs
        assert ctrl.epoch == 1

        # no collection while waiting: cycles pass without effect
        clock.advance(5.0)
        ctrl.tick(clock.now())
        assert ctrl.phase == "await_acks"

        ctrl.ack("app", 1)
        assert ctrl.phase == "settle"
        clock.advance(1.0)
        ctrl.tick(clock.now())
        assert ctrl.phase == "settle"  # one settle cycle down
        clock.advance(1.0)
        ctrl.tick(clock.now())
        assert ctrl.phase == "collect"

    def test_cadence_never_early(self):
        cfg = LoopConfig(cycle_time=5.0, snapshot_window=1, settle_cycles=0)
        clock = FakeClock()
        ctrl = Controller(cfg, clock=clock, seed=1)
        ctrl.register(manifest("app"))
        boundaries = []
        for t in (1.0, 2.0, 4.9, 5.0, 6.0, 9.9, 10.0, 20.0, 24.9, 25.0):
            ctrl.tick(t)
            if len(boundaries) != ctrl.cycle_count:
                boundaries.append(t)
        assert boundaries == [5.0, 10.0, 20.0, 25.0]
        for a, b in zip(boundaries, boundaries[1:]):
            assert b - a >= 5.0

    def test_settle_countdown_starts_at_ack(self):
        cfg = LoopConfig(cycle_time=1.0, snapshot_window=1, settle_cycles=1)
        clock = FakeClock()
        ctrl = Controller(cfg, clock=clock, seed=1)
        ctrl.register(manifest("app"))
        clock.advance(1.0)
        ctrl.submit_report("app", 0, self.metric("app", ctrl.published.genes), TS)
        ctrl.tick(clock.now())
        assert ctrl.phase == "await_acks"
        clock.advance(10.0)  # long enactment delay; settle must not tick it away
        ctrl.tick(clock.now())
        assert ctrl.phase == "await_acks"
        ctrl.ack("app", ctrl.epoch)
        assert ctrl.phase == "settle"
        clock.advance(1.0)
        ctrl.tick(clock.now())
        assert ctrl.phase == "collect"


class TestViews:
    def test_projection_only_own_params(self):
        ctrl, _ = fast_controller()
        ctrl.register(manifest("a", n_params=2))
        ctrl.register(manifest("b", n_params=3))
        view = ctrl.view("a")
        assert [p["name"] for p in view["parameters"]] == ["a_p0", "a_p1"]
        assert view["epoch"] == 0
        assert all(isinstance(p["value"], float) for p in view["parameters"])

    def test_requires_restart_only_when_offline_param_changes(self):
        ctrl, clock = fast_controller()
        ctrl.register(manifest("app", changeability="offline"))

        def metric(pca_id, genes):
            return {"app_m0": float(sum(genes.values()))}

        before = dict(ctrl.published.genes)
        run_steps(ctrl, clock, ["app"], metric, 1)
        view = ctrl.view("app")
        changed = dict(ctrl.published.genes) != before
        assert view["requires_restart"] == changed

    def test_online_changes_never_require_restart(self):
        ctrl, clock = fast_controller()
        ctrl.register(manifest("app", changeability="online"))

        def metric(pca_id, genes):
            return {"app_m0": float(sum(genes.values()))}

        run_steps(ctrl, clock, ["app"], metric, 3)
        assert ctrl.view("app")["requires_restart"] is False

    def test_long_poll_times_out_with_current_epoch(self):
        ctrl, _ = fast_controller()
        ctrl.register(manifest("app"))
        view = ctrl.wait_view("app", wait_epoch=0, timeout=0.05)
        assert view["epoch"] == 0


class TestStats:
    def test_fresh_controller(self):
        ctrl, _ = fast_controller()
        s = ctrl.stats()
        assert s["step_index"] == 0
        assert s["best"] is None
        assert s["epoch"] == 0
        assert s["loop_phase"] == "idle"

    def test_after_steps(self):
        ctrl, clock = fast_controller()
        ctrl.register(manifest("app"))
        run_steps(ctrl, clock, ["app"], lambda p, g: {"app_m0": float(sum(g.values()))}, 10)
        s = ctrl.stats()
        assert s["step_index"] == 10
        assert s["best"] is not None
        assert s["last_proposal"]["kind"] in {"bootstrap", "reevaluation", "supermerge", "recombination"}
        assert s["phase"] in {"exploration", "exploitation"}
        assert len(ctrl.history_lines()) == s["history_len"]
        assert all('"step_index"' in line for line in ctrl.history_lines(from_step=5))

    def test_history_lines_filtered(self):
        ctrl, clock = fast_controller()
        ctrl.register(manifest("app"))
        run_steps(ctrl, clock, ["app"], lambda p, g: {"app_m0": float(sum(g.values()))}, 6)
        import json

        for line in ctrl.history_lines(from_step=3):
            assert json.loads(line)["step_index"] >= 3


class TestDurability:
    def test_kill_and_restart_resumes(self, tmp_path):
        def metric(pca_id, genes):
            return {"app_m0": float(sum(genes.values()))}

        ctrl, clock = fast_controller(tmp_path, history=True)
        ctrl.register(manifest("app"))
        run_steps(ctrl, clock, ["app"], metric, 12)
        live = {r.step_index: (r.score, r.score_sum) for r in ctrl.session.records}
        epoch, published = ctrl.epoch, dict(ctrl.published.genes)
        ctrl.close()  # no graceful shutdown handshake: state must already be on disk

        ctrl2, _ = fast_controller(tmp_path, history=True)
        assert ctrl2.epoch == epoch
        assert dict(ctrl2.published.genes) == published
        ctrl2.register(manifest("app"))
        assert ctrl2.session.iterations == 12
        replayed = {r.step_index: (r.score, r.score_sum) for r in ctrl2.session.records}
        assert replayed == live

    def test_restart_continues_stepping(self, tmp_path):
        def metric(pca_id, genes):
            return {"app_m0": float(sum(genes.values()))}

        ctrl, clock = fast_controller(tmp_path, history=True)
        ctrl.register(manifest("app"))
        run_steps(ctrl, clock, ["app"], metric, 5)
        ctrl.close()

        ctrl2, clock2 = fast_controller(tmp_path, history=True)
        ctrl2.register(manifest("app"))
        run_steps(ctrl2, clock2, ["app"], metric, 5)
        assert ctrl2.session.iterations == 10
        assert ctrl2.epoch == 10


class TestTimestamps:
    def test_z_suffix_accepted(self):
        assert parse_rfc3339("2026-08-16T12:00:00Z").tzinfo is not None

    def test_offset_accepted(self):
        assert parse_rfc3339("2026-08-16T12:00:00+02:00").utcoffset().total_seconds() == 7200
