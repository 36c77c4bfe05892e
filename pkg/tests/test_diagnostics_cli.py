from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import two_stream_data
from quasineutral.diagnostics_cli import cli
from quasineutral.diagnostics_cli.config import PRESETS, FieldSpec, LayerSpec, ModeEntry, RunConfig, load_config
from quasineutral.diagnostics_cli.dispersion import MIN_PERIODS, measure_dispersion, mode_signal, peak_frequency
from quasineutral.diagnostics_cli.export import (
    decode_array,
    encode_array,
    export,
    import_report,
    import_trajectory,
    load_json,
    manifest,
)
from quasineutral.diagnostics_cli.sweep import METRICS, SweepEntry, SweepReport, convergence_sweep, run_member
from quasineutral.emhd_limit import resonance_set
from quasineutral.evolution import simulate
from quasineutral.filtering_correctors import filtered_fields
from quasineutral.spectral_core import TWO_PI, ConfigurationError, Lattice


def _write(path, doc: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(doc))
    return path


SMALL_SWEEP = {
    "dim": 2,
    "K": 2,
    "T": 0.1,
    "eps": 0.2,
    "compare_step": 0.05,
    "preset": {"name": "two-stream-sheets", "amplitude": 0.05, "drift": 0.3, "field": 0.2},
}


# ------------------------------------------------------------------ configuration
finite = st.floats(-2.0, 2.0, allow_nan=False, allow_infinity=False)
modes_1d = st.lists(
    st.builds(lambda k, re, im: ModeEntry((k,), complex(re, im)), st.integers(-3, 3), finite, finite), max_size=3
)
vec_modes_1d = st.lists(
    st.builds(lambda k, re, im, c: ModeEntry((k,), complex(re, im), c), st.integers(-3, 3), finite, finite, st.integers(0, 2)),
    max_size=3,
)


@st.composite
def run_configs(draw):
    n = draw(st.integers(1, 3))
    raw = [draw(st.floats(0.1, 1.0)) for _ in range(n)]
    layers = tuple(
        LayerSpec(
            w / sum(raw),
            FieldSpec((draw(st.floats(0.5, 1.5)),), tuple(draw(modes_1d))),
            FieldSpec(tuple(draw(finite) for _ in range(3)), tuple(draw(vec_modes_1d))),
        )
        for w in raw
    )
    return RunConfig(
        dim=1,
        K=3,
        eps=draw(st.floats(1e-3, 1.0)),
        dt=draw(st.one_of(st.none(), st.floats(1e-4, 0.1))),
        T=draw(st.floats(0.0, 5.0)),
        eta=draw(st.floats(1e-3, 1.0)),
        layers=layers,
        B0=FieldSpec((0.0, 0.0, 0.0), tuple(draw(vec_modes_1d))),
        eps_list=tuple(draw(st.lists(st.floats(1e-3, 1.0), max_size=4))),
        stride=draw(st.integers(1, 5)),
        resonance={"radius": draw(st.integers(1, 30))},
    )


class TestConfig:
    @settings(max_examples=60, deadline=None)
    @given(cfg=run_configs())
    def test_yaml_round_trip(self, cfg):
        back = RunConfig.from_yaml(cfg.to_yaml())
        assert back == cfg
        assert back.digest() == cfg.digest()

    @pytest.mark.parametrize("name", PRESETS)
    def test_presets_build_consistent_data(self, name):
        cfg = RunConfig(dim=2, K=3, preset=name)
        data = cfg.initial_data()
        total = data.layers.weighted_sum(data.layers.rho)
        lat = cfg.lattice()
        assert data.eps == cfg.eps
        assert np.max(np.abs(lat.div(data.B0))) < 1e-13
        # Gauss holds by construction
        resid = cfg.eps**2 * lat.div(data.E0) - (total - lat.constant(1.0))
        assert np.max(np.abs(resid)) < 1e-12

    def test_preset_with_overrides(self, tmp_path):
        p = _write(tmp_path / "c.yaml", {"dim": 2, "K": 2, "preset": {"name": "single-mode-irr", "amplitude": 1e-3, "k": [0, 1]}})
        cfg = load_config(p)
        rho = cfg.layer_stack().rho[0]
        lat = cfg.lattice()
        assert rho[lat.index_of((0, 1))] == pytest.approx(0.5e-3 * TWO_PI**2)

    def test_mode_entry_adds_conjugate(self):
        lat = Lattice(1, 2)
        c = FieldSpec((1.0,), (ModeEntry((1,), 0.3 + 0.1j),)).coefficients(lat, 0)
        g = lat.to_grid(c, lat.N)
        x = lat.grid_points()[0]
        np.testing.assert_allclose(g, 1.0 + 2 * (0.3 * np.cos(x) - 0.1 * np.sin(x)), atol=1e-14)

    @pytest.mark.parametrize(
        "doc",
        [
            {"dim": 4, "preset": "quiescent"},
            {"dim": 2, "eps": 0.0, "preset": "quiescent"},
            {"dim": 2, "eps_list": [0.1, 1.5], "preset": "quiescent"},
            {"dim": 2},
            {"dim": 2, "preset": "quiescent", "colour": "blue"},
            {"dim": 2, "preset": "nonexistent"},
        ],
    )
    def test_invalid_configs(self, doc):
        with pytest.raises(ConfigurationError):
            RunConfig.from_dict(doc).initial_data()

    def test_weights_must_sum_to_one(self):
        layer = LayerSpec(0.7, FieldSpec((1.0,)), FieldSpec((0.0, 0.0, 0.0)))
        with pytest.raises(ConfigurationError):
            RunConfig(dim=1, K=2, layers=(layer,)).layer_stack()

    def test_unreadable(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "missing.yaml")
        bad = tmp_path / "bad.yaml"
        bad.write_text("- just\n- a list\n")
        with pytest.raises(ConfigurationError):
            load_config(bad)


# ------------------------------------------------------------------ dispersion
class TestDispersion:
    @pytest.mark.parametrize("omega", [1.0, 7.3, 31.0])
    def test_synthetic_cosine(self, omega):
        t = np.linspace(0.0, 10 * TWO_PI / omega, 600)
        assert peak_frequency(t, 0.3 + np.cos(omega * t + 0.4), omega) == pytest.approx(omega, rel=1e-3)

    def test_complex_exponential_matches_cosine(self):
        omega = 5.0
        t = np.linspace(0.0, 12 * TWO_PI / omega, 500)
        a = peak_frequency(t, np.exp(-1j * omega * t))
        b = peak_frequency(t, np.cos(omega * t))
        assert a == pytest.approx(omega, rel=1e-3) and b == pytest.approx(omega, rel=1e-3)

    def test_too_short_signal_names_horizon(self):
        omega = 2.0
        t = np.linspace(0.0, 3 * TWO_PI / omega, 200)
        with pytest.raises(ValueError, match="needed for 8 periods"):
            peak_frequency(t, np.cos(omega * t), omega)
        assert MIN_PERIODS == 8

    def test_non_uniform_grid_rejected(self):
        t = np.sort(np.random.default_rng(0).uniform(0, 10, 64))
        with pytest.raises(ValueError):
            peak_frequency(t, np.cos(t))

    def test_linear_run_irrotational(self):
        from conftest import linear_data

        eps = 0.2
        traj = simulate(linear_data(Lattice(1, 2), eps), 9 * TWO_PI * eps, extend_horizon=False)
        assert measure_dispersion(traj, (1,), "irr", 1 / eps) == pytest.approx(1 / eps, rel=1e-2)

    def test_mode_signal_validation(self):
        from conftest import linear_data

        traj = simulate(linear_data(Lattice(1, 2), 0.2), 0.1, extend_horizon=False)
        with pytest.raises(ValueError):
            mode_signal(traj, (1,), "bogus")
        assert mode_signal(traj, (0,), "mean").shape == traj.times.shape


# ------------------------------------------------------------------ sweep
@pytest.fixture(scope="module")
def small_cfg():
    return RunConfig.from_dict(SMALL_SWEEP)


@pytest.fixture(scope="module")
def single_report(small_cfg):
    return convergence_sweep(small_cfg, [0.2])


class TestSweep:
    def test_single_member_has_no_verdict(self, single_report):
        assert len(single_report.entries) == 1
        assert all(v is None for v in single_report.verdicts.values())
        assert set(single_report.verdicts) == set(METRICS)
        e = single_report.entries[0]
        assert e.status == "ok", e.message
        assert all(v >= 0 for v in e.errors.values())
        assert e.gauss < 1e-6 and e.divB < 1e-10

    def test_repeated_eps_gives_identical_metrics(self, small_cfg, single_report):
        rep = convergence_sweep(small_cfg, [0.2, 0.2])
        a, b = rep.entries
        assert a.errors == b.errors == single_report.entries[0].errors
        assert a.norms == b.norms and a.gauss == b.gauss
        # equal members never count as a strict decrease
        assert all(v is False for v in rep.verdicts.values())

    def test_failed_member_gives_partial_report(self, small_cfg, monkeypatch):
        import quasineutral.diagnostics_cli.sweep as sweep_mod
        from quasineutral.evolution import BlowUpError

        real = sweep_mod.simulate

        def flaky(data, *a, **kw):
            if data.eps < 0.15:
                raise BlowUpError(0.5, "test")
            return real(data, *a, **kw)

        monkeypatch.setattr(sweep_mod, "simulate", flaky)
        rep = convergence_sweep(small_cfg, [0.2, 0.1])
        assert [e.status for e in rep.entries] == ["ok", "failed"]
        assert "BlowUpError" in rep.entries[1].message
        assert all(v is None for v in rep.verdicts.values())

    def test_members_sorted_largest_first(self, small_cfg, monkeypatch):
        import quasineutral.diagnostics_cli.sweep as sweep_mod

        seen = []
        monkeypatch.setattr(sweep_mod, "run_member", lambda cfg, eps, ref: seen.append(eps) or SweepEntry(eps))
        rep = convergence_sweep(small_cfg, [0.05, 0.2, 0.1])
        assert seen == [0.2, 0.1, 0.05]
        assert [e.eps for e in rep.entries] == seen

    def test_run_member_reports_constraints(self, small_cfg):
        e = run_member(small_cfg, 0.2)
        assert e.status == "ok"
        assert set(e.errors) == set(METRICS)
        assert e.runtime > 0


# ------------------------------------------------------------------ export
def _report(values):
    entries = [
        SweepEntry(eps=e, errors={m: v * (i + 1) for i, m in enumerate(METRICS)}, gauss=v / 3, divB=0.0, weak_W=v / 7, runtime=v)
        for e, v in values
    ]
    return SweepReport(entries, {m: None for m in METRICS}, {}, {"T": 0.5})


class TestExport:
    def test_empty_report_csv_is_header_only(self, tmp_path):
        export(SweepReport(), tmp_path, "csv")
        rows = list(csv.reader((tmp_path / "sweep_report.csv").open()))
        assert len(rows) == 1 and rows[0][0] == "eps"
        assert import_report(tmp_path / "sweep_report.csv").entries == []

    def test_empty_report_json(self, tmp_path):
        export(SweepReport(), tmp_path, "json")
        assert import_report(tmp_path / "sweep_report.json") == SweepReport()

    @settings(max_examples=40, deadline=None)
    @given(values=st.lists(st.tuples(st.floats(1e-3, 1.0), st.floats(0.0, 1e3, allow_subnormal=True)), max_size=4))
    def test_report_round_trip_is_bit_exact(self, tmp_path_factory, values):
        out = tmp_path_factory.mktemp("rt")
        rep = _report(values)
        export(rep, out, "json")
        assert import_report(out / "sweep_report.json") == rep
        export(rep, out, "csv")
        back = import_report(out / "sweep_report.csv")
        for a, b in zip(rep.entries, back.entries):
            assert a.eps == b.eps and a.errors == b.errors
            assert (a.gauss, a.divB, a.weak_W, a.runtime) == (b.gauss, b.divB, b.weak_W, b.runtime)

    def test_array_codec(self):
        a = np.array([[1.0 + 2.0j, -0.1], [1e-300j, np.pi]])
        np.testing.assert_array_equal(decode_array(json.loads(json.dumps(encode_array(a)))), a)
        r = np.arange(6.0).reshape(2, 3) / 7
        np.testing.assert_array_equal(decode_array(encode_array(r)), r)

    def test_trajectory_reingest_refilters_identically(self, tmp_path):
        lat = Lattice(2, 2)
        traj = simulate(two_stream_data(lat, 0.2), 0.1)
        export(traj, tmp_path, "json")
        back = import_trajectory(tmp_path / "trajectory.json")
        np.testing.assert_array_equal(back.times, traj.times)
        a, b = filtered_fields(traj, 0.1), filtered_fields(back, 0.1)
        for name in ("times", "E1", "E2", "W", "W0", "b", "w"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_trajectory_stride_and_manifest(self, tmp_path):
        traj = simulate(two_stream_data(Lattice(2, 2), 0.2), 0.05)
        files = export(traj, tmp_path, "json", stride=3, meta=manifest(None, {"gauss": 1e-6}))
        assert {f.name for f in files} == {"trajectory.json", "trajectory.manifest.json"}
        back = import_trajectory(tmp_path / "trajectory.json")
        np.testing.assert_array_equal(back.times, traj.times[::3])
        np.testing.assert_array_equal(back.E, traj.E[::3])
        assert back.metadata["export_stride"] == 3
        m = json.loads((tmp_path / "trajectory.manifest.json").read_text())
        assert {"config_sha256", "git_describe", "package_version", "tolerances", "kind"} <= set(m)
        assert m["tolerances"] == {"gauss": 1e-6}

    def test_resonance_csv(self, tmp_path):
        r = resonance_set(2, (1, -1), (0, 0, 0), 3)
        export(r, tmp_path, "csv")
        rows = list(csv.reader((tmp_path / "resonance_set.csv").open()))
        assert len(rows) == 1 + 8

    def test_exports_are_deterministic(self, tmp_path):
        rep = _report([(0.1, 0.5)])
        export(rep, tmp_path / "a", "json", meta={"x": 1})
        export(rep, tmp_path / "b", "json", meta={"x": 1})
        assert (tmp_path / "a" / "sweep_report.json").read_bytes() == (tmp_path / "b" / "sweep_report.json").read_bytes()

    def test_bad_format_and_object(self, tmp_path):
        with pytest.raises(ValueError):
            export(SweepReport(), tmp_path, "xml")
        with pytest.raises(TypeError):
            export(object(), tmp_path)

    def test_io_errors_surface(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError):
            export(SweepReport(), blocker / "sub")


# ------------------------------------------------------------------ command line
def _run(tmp_path, command, doc, *extra):
    cfg = _write(tmp_path / "cfg.yaml", doc)
    out = tmp_path / "out"
    code = cli.main([command, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


class TestCli:
    def test_resonance(self, tmp_path):
        code, out = _run(tmp_path, "resonance", {"dim": 3, "K": 2, "preset": "quiescent", "resonance": {"kinds": [2], "radius": 4}})
        assert code == cli.EXIT_OK
        doc = load_json(out / "resonance_sets.json")
        assert len(doc["data"]["sets"][0]["members"]) == 8
        assert (out / "config.yaml").exists() and (out / "resonance_sets.manifest.json").exists()

    def test_simulate_writes_figures(self, tmp_path):
        code, out = _run(tmp_path, "simulate", {**SMALL_SWEEP, "T": 0.02})
        assert code == cli.EXIT_OK
        for name in ("energy.png", "constraints.png", "trajectory.json", "summary.json"):
            assert (out / name).stat().st_size > 0
        summary = load_json(out / "summary.json")["data"]
        assert summary["max_gauss_relative"] < 1e-6 and summary["max_divB"] < 1e-10

    def test_iterate(self, tmp_path):
        doc = yaml.safe_load(open("configs/picard.yaml"))
        code, out = _run(tmp_path, "iterate", doc)
        assert code == cli.EXIT_OK
        assert (out / "iteration.png").exists()
        assert load_json(out / "iteration_report.json")["data"]["converged"]

    def test_iterate_blow_up_exit_code(self, tmp_path):
        doc = yaml.safe_load(open("configs/picard.yaml"))
        doc.update(eta=50.0, picard_n_max=3)
        code, _ = _run(tmp_path, "iterate", doc)
        assert code == cli.EXIT_BLOWUP

    def test_config_error_exit_code(self, tmp_path):
        code, _ = _run(tmp_path, "simulate", {"dim": 2, "preset": "quiescent", "unknown_key": 1})
        assert code == cli.EXIT_CONFIG
        code, _ = _run(tmp_path, "simulate", {**SMALL_SWEEP, "T": 0.02}, "--threads", "0")
        assert code == cli.EXIT_CONFIG

    def test_constraint_exit_code(self, tmp_path):
        doc = {
            "dim": 2,
            "K": 2,
            "T": 0.02,
            "eps": 0.2,
            "preset": "quiescent",
            # a longitudinal magnetic mode: div B != 0
            "B0": {"mean": [0, 0, 0], "modes": [{"k": [1, 0], "component": 0, "value": [0.1, 0.0]}]},
        }
        code, _ = _run(tmp_path, "simulate", doc)
        assert code == cli.EXIT_CONSTRAINT

    def test_dispersion_command(self, tmp_path):
        doc = {"dim": 1, "K": 2, "eps": 0.2, "T": 9 * TWO_PI * 0.2, "preset": {"name": "single-mode-irr", "k": [1]}, "dispersion": {"k": [1], "component": "irr"}}
        code, out = _run(tmp_path, "dispersion", doc)
        assert code == cli.EXIT_OK
        res = load_json(out / "dispersion.json")["data"]
        assert res["relative_error"] < 1e-2
        assert (out / "spectrum.png").exists()

    def test_filter_extract_emhd(self, tmp_path):
        base = {**SMALL_SWEEP, "T": 0.05, "emhd_dt": 0.01}
        for command, figure in (("filter", "filtered.png"), ("extract", "correctors.png"), ("emhd", "emhd_constraints.png")):
            code, out = _run(tmp_path / command, command, base)
            assert code == cli.EXIT_OK, command
            assert (out / figure).exists()

    def test_export_converts_json_to_csv(self, tmp_path):
        src = tmp_path / "src"
        export(_report([(0.2, 1.0), (0.1, 0.5)]), src, "json")
        out = tmp_path / "out"
        code = cli.main(["export", "--input", str(src / "sweep_report.json"), "--out", str(out), "--format", "csv"])
        assert code == cli.EXIT_OK
        back = import_report(out / "sweep_report.csv")
        assert [e.eps for e in back.entries] == [0.2, 0.1]

    def test_sweep_command(self, tmp_path):
        code, out = _run(tmp_path, "sweep", {**SMALL_SWEEP, "eps_list": [0.2]})
        assert code == cli.EXIT_OK
        assert (out / "sweep.png").exists()
        rep = import_report(out / "sweep_report.json")
        assert rep.entries[0].status == "ok"
        assert not math.isnan(rep.entries[0].errors["w"])

    def test_parser_lists_every_subcommand(self):
        parser = cli.build_parser()
        for name in cli.COMMANDS:
            args = parser.parse_args([name, "--config", "c.yaml", "--out", "o"] + (["--input", "x.json"] if name == "export" else []))
            assert args.command == name and args.format == "json" and args.threads == 1
