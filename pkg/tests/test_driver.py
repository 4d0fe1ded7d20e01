import numpy as np
import pytest

from cutshape.cli import main as cli_main
from cutshape.driver import (EXPERIMENTS, RunConfig, generate_synthetic_data,
                             make_config, parse_config, run_identification,
                             write_config)
from cutshape.levelset import read_polylines, read_snapshot
from cutshape.mesh import build_uniform_mesh
from cutshape.problems import TraceTable, boundary_arclength, circle_data


def small_circle_config(**overrides):
    """Fast variant of the annulus experiment for driver-level tests."""
    base = dict(n=50, tol=1e-4, max_iter=40, r=1.0, stride=5)
    base.update(overrides)
    return make_config("circle_small_init", **base)


class TestConfig:
    def test_presets_complete(self):
        for name in EXPERIMENTS:
            cfg = make_config(name)
            assert cfg.preset == name
            assert cfg.true_preset and cfg.init_preset and cfg.data

    def test_validation(self):
        with pytest.raises(ValueError):
            RunConfig(tol=0.0)
        with pytest.raises(ValueError):
            RunConfig(r=1.5)
        with pytest.raises(ValueError):
            RunConfig(sd_variant="newton")
        with pytest.raises(ValueError):
            RunConfig(beta1=-1.0)

    def test_roundtrip_through_file(self, tmp_path):
        cfg = make_config("ellipse_circle_init", sd_variant="boundary",
                          max_iter=17, out="runs/x")
        path = tmp_path / "run.cfg"
        write_config(cfg, path)
        back = parse_config(path)
        assert back.sd_variant == "boundary"
        assert back.max_iter == 17
        assert back.true_params == cfg.true_params
        assert back.init_params == cfg.init_params
        assert back.tol == cfg.tol

    def test_roundtrip_nested_params(self, tmp_path):
        cfg = make_config("merge_two_lame", max_iter=3)
        path = tmp_path / "run.cfg"
        write_config(cfg, path)
        back = parse_config(path)
        assert back.init_params["first"]["center"] == (0.32, 0.5)
        assert back.init_params["second"]["a"] == 1296.0

    def test_overrides_win(self, tmp_path):
        cfg = make_config("circle_small_init")
        path = tmp_path / "run.cfg"
        write_config(cfg, path)
        back = parse_config(path, overrides={"sd": "continuous",
                                             "max_iter": 3})
        assert back.sd_variant == "continuous"
        assert back.max_iter == 3

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("preset=circle_small_init\nwarp_speed=9\n")
        with pytest.raises(ValueError, match="warp_speed"):
            parse_config(path)


class TestSyntheticData:
    def test_circle_table_matches_analytic(self):
        cfg = make_config("circle_small_init", n_fine=80, gd_source="synthetic")
        table = generate_synthetic_data(cfg)
        data = circle_data()
        mesh = build_uniform_mesh(80)
        bnodes = np.unique(mesh.boundary_faces[:, :2])
        pts = mesh.nodes[bnodes]
        err = np.abs(table.interp(boundary_arclength(pts))
                     - data.exact_u(pts)).max()
        h_fine = mesh.h
        assert err <= 10.0 * h_fine**2

    def test_entry_count(self):
        cfg = make_config("circle_small_init", n_fine=60)
        table = generate_synthetic_data(cfg)
        assert len(table.s) == 4 * 60

    def test_zero_data_zero_table(self):
        cfg = make_config("circle_small_init", n_fine=20, data="zero")
        table = generate_synthetic_data(cfg)
        assert np.abs(table.values).max() <= 1e-14

    def test_interface_touching_boundary_rejected(self):
        cfg = make_config("circle_small_init", n_fine=20)
        cfg.true_params = dict(center=(0.5, 0.5), radius=0.55)
        with pytest.raises(ValueError, match="inside"):
            generate_synthetic_data(cfg)

    def test_table_io_roundtrip(self, tmp_path):
        cfg = make_config("circle_small_init", n_fine=20)
        table = generate_synthetic_data(cfg, out_file=tmp_path / "gd.txt")
        back = TraceTable.read(tmp_path / "gd.txt")
        assert np.allclose(back.s, table.s)
        assert np.allclose(back.values, table.values)


class TestRunIdentification:
    def test_max_iter_zero_records_initial_cost(self):
        cfg = small_circle_config(max_iter=0)
        trace = run_identification(cfg)
        assert trace.exit_status == "max_iter"
        assert len(trace.rows) == 1
        assert trace.rows[0].k == 0
        assert trace.rows[0].J > 0

    def test_truth_init_exits_immediately(self):
        # initial guess = true interface with consistent data: the misfit
        # starts below a tolerance at the discretization-error level
        cfg = small_circle_config(tol=5e-4)
        cfg.init_params = dict(cfg.true_params)
        trace = run_identification(cfg)
        assert trace.exit_status == "tolerance"
        assert trace.iterations == 0

    def test_descent_recorded_every_iteration(self):
        cfg = small_circle_config(max_iter=6, tol=1e-30)
        trace = run_identification(cfg)
        assert all(row.descent < 0 for row in trace.rows[:-1])

    def test_outputs_layout_and_stride(self, tmp_path):
        cfg = small_circle_config(out=str(tmp_path / "run"))
        trace = run_identification(cfg)
        out = tmp_path / "run"
        lines = (out / "residuals.csv").read_text().splitlines()
        assert lines[0] == "iter,J,beta_h1,T,seconds"
        assert len(lines) == len(trace.rows) + 1
        ks = sorted(int(p.stem.split("_")[1])
                    for p in out.glob("levelset_*.txt"))
        expect = sorted(set(range(0, trace.iterations + 1, 5))
                        | {trace.iterations})
        assert ks == expect
        # snapshots parse back
        mesh = build_uniform_mesh(cfg.n)
        phi = read_snapshot(out / f"levelset_{trace.iterations}.txt", mesh)
        assert np.all(np.isfinite(phi.values))
        chains = read_polylines(out / f"isoline_{trace.iterations}.txt")
        assert len(chains) >= 1

    def test_determinism(self, tmp_path):
        runs = []
        for tag in ("a", "b"):
            cfg = small_circle_config(out=str(tmp_path / tag), max_iter=8,
                                      tol=1e-30)
            run_identification(cfg)
            rows = (tmp_path / tag / "residuals.csv").read_text().splitlines()
            # drop the wall-time column: it is the one nondeterministic field
            runs.append([",".join(r.split(",")[:4]) for r in rows])
        assert runs[0] == runs[1]

    def test_synthetic_run_smoke(self, gd_table_path):
        cfg = make_config("ellipse_circle_init", max_iter=2, tol=1e-30,
                          gd_file=str(gd_table_path("ellipse_circle_init")))
        trace = run_identification(cfg)
        assert trace.exit_status == "max_iter"
        assert trace.rows[1].J < trace.rows[0].J

    def test_first_iterate_regression_values(self):
        # frozen pipeline oracles: misfit and velocity norm of the annulus
        # experiment's first iterate (small-circle guess on the 100 mesh)
        cfg = make_config("circle_small_init", max_iter=1, tol=1e-30)
        trace = run_identification(cfg)
        row = trace.rows[0]
        assert row.J == pytest.approx(35.34525157514507, rel=1e-9)
        assert row.beta_h1 == pytest.approx(149.99305310786858, rel=1e-9)

    def test_write_outputs_empty_trace(self, tmp_path):
        from cutshape.driver import RunTrace, write_outputs
        cfg = small_circle_config(out=str(tmp_path / "empty"))
        write_outputs(cfg, RunTrace(rows=[], exit_status="max_iter",
                                    snapshots=[], min_grad_log=[]))
        lines = (tmp_path / "empty" / "residuals.csv").read_text().splitlines()
        assert lines == ["iter,J,beta_h1,T,seconds"]

    def test_velocity_dump_format(self, tmp_path):
        cfg = small_circle_config(n=24, max_iter=1, tol=1e-30,
                                  out=str(tmp_path / "v"), dump_velocity=True,
                                  stride=1)
        run_identification(cfg)
        lines = (tmp_path / "v" / "velocity_0.txt").read_text().splitlines()
        assert lines[0] == "velocity n=24 iter=0"
        assert len(lines) == 1 + 25 * 25
        assert all(len(l.split()) == 2 for l in lines[1:])


class TestCli:
    def test_identify_preset(self, capsys):
        rc = cli_main(["identify", "--preset", "circle_small_init",
                       "--n", "50", "--tol", "1e-4", "--r", "1.0"])
        assert rc == 0
        assert "exit=tolerance" in capsys.readouterr().out

    def test_gen_data_analytic_noop(self, capsys):
        rc = cli_main(["gen-data", "--preset", "circle_small_init"])
        assert rc == 0

    def test_gen_data_writes_table(self, tmp_path, capsys):
        cfg = make_config("ellipse_circle_init", n_fine=40,
                          gd_file=str(tmp_path / "gd.txt"))
        path = tmp_path / "c.cfg"
        write_config(cfg, path)
        rc = cli_main(["gen-data", "--config", str(path)])
        assert rc == 0
        assert (tmp_path / "gd.txt").exists()

    def test_identify_config_file(self, tmp_path, capsys):
        cfg = small_circle_config(max_iter=2, tol=1e-30)
        path = tmp_path / "c.cfg"
        write_config(cfg, path)
        rc = cli_main(["identify", "--config", str(path)])
        assert rc == 0
        assert "exit=max_iter" in capsys.readouterr().out

    def test_check_sd_reports_and_dumps(self, tmp_path, capsys):
        cfg = small_circle_config(n=20, out=str(tmp_path / "sd"))
        path = tmp_path / "c.cfg"
        write_config(cfg, path)
        rc = cli_main(["check-sd", "--config", str(path), "--t", "1e-5",
                       "--num-fields", "2"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "discrete" in out and "boundary" in out
        for variant in ("continuous", "discrete", "boundary"):
            dump = tmp_path / "sd" / f"check_sd_{variant}.csv"
            lines = dump.read_text().splitlines()
            assert lines[0] == "theta_id,assembled,fd,rel_err"
            assert len(lines) == 3
