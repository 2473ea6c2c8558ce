import functools
import math

import numpy as np
import pytest

from adbddc.cli import main as cli_main
from adbddc.harness import (
    EX_DOMAIN,
    ExperimentConfig,
    ResultRow,
    case_specs,
    effective_m,
    emit_tables,
    face_threshold,
    format_table,
    load_config,
    octant_numbers,
    parse_results_csv,
    random_viscosity,
    run_case,
    subdomain_viscosity_tests,
    validate_config,
)
from adbddc.mesh import box_mesh

OCTANT_POINTS = {
    1: (-0.25, -0.25, 0.25), 2: (0.25, -0.25, 0.25),
    3: (0.25, 0.25, 0.25), 4: (-0.25, 0.25, 0.25),
    5: (-0.25, -0.25, 0.75), 6: (0.25, -0.25, 0.75),
    7: (0.25, 0.25, 0.75), 8: (-0.25, 0.25, 0.75),
}


class TestViscosityGroupings:
    def test_octant_numbering(self):
        pts = np.array([OCTANT_POINTS[k] for k in range(1, 9)])
        assert octant_numbers(pts).tolist() == list(range(1, 9))

    def test_grouping_one_splits_into_halves(self):
        mesh = box_mesh(EX_DOMAIN, (8, 8, 8))
        cent = mesh.nodes[mesh.elements].mean(axis=1)
        visc = subdomain_viscosity_tests(1, 2.0, 3.0)(cent)
        assert np.all(visc[cent[:, 0] < 0.0] == 2.0)
        assert np.all(visc[cent[:, 0] > 0.0] == 3.0)

    def test_equal_values_give_constant_field(self):
        pts = np.array([OCTANT_POINTS[k] for k in range(1, 9)])
        for t in (1, 2, 3):
            assert np.all(subdomain_viscosity_tests(t, 5.0, 5.0)(pts) == 5.0)

    def test_grouping_three_is_a_checkerboard(self):
        # face-adjacent octants (one coordinate flipped) always differ
        pts = np.array([OCTANT_POINTS[k] for k in range(1, 9)])
        visc = subdomain_viscosity_tests(3, 1.0, 2.0)(pts)
        value = {k: visc[k - 1] for k in range(1, 9)}
        for a in range(1, 9):
            for b in range(a + 1, 9):
                da = np.abs(np.array(OCTANT_POINTS[a]) - np.array(OCTANT_POINTS[b]))
                if np.count_nonzero(da) == 1:  # share a face
                    assert value[a] != value[b], (a, b)

    def test_unknown_grouping_rejected(self):
        with pytest.raises(ValueError, match="grouping"):
            subdomain_viscosity_tests(4, 1.0, 2.0)


class TestRandomViscosity:
    def test_seed_determinism(self):
        cent = np.random.default_rng(0).uniform(-0.5, 0.5, (500, 3))
        a = random_viscosity(42)(cent)
        b = random_viscosity(42)(cent)
        c = random_viscosity(43)(cent)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_range_and_mean(self):
        cent = np.zeros((20000, 3))
        v = random_viscosity(3)(cent)
        assert v.min() >= 1e-3 and v.max() <= 1e3
        assert abs(np.log10(v).mean()) < 0.1


class TestThresholds:
    def test_face_threshold_auto(self):
        assert face_threshold(0.0, 4) == 1.0 + math.log(4.0)
        assert face_threshold(7.5, 4) == 7.5

    def test_effective_m_matches_regular_grid(self):
        mesh = box_mesh(EX_DOMAIN, (8, 8, 8))
        assert effective_m(mesh, 8) == 4
        mesh = box_mesh(EX_DOMAIN, (12, 12, 12))
        assert effective_m(mesh, 8) == 6


class TestConfig:
    def test_load_roundtrip(self, tmp_path):
        p = tmp_path / "exp.toml"
        p.write_text('case = "tests"\nm = [4, 6]\nnu1 = 1e-1\nnu2 = 1e-5\n'
                     'tests = [1, 3]\nseed = 9\nvariant = "old"\n')
        cfg = load_config(p)
        assert cfg.case == "tests"
        assert cfg.m == (4, 6)
        assert cfg.nu1 == (0.1,) and cfg.nu2 == (1e-5,)
        assert cfg.tests == (1, 3)
        assert cfg.seed == 9 and cfg.variant == "old"

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "exp.toml"
        p.write_text('case = "tests"\nviscosity = 1.0\n')
        with pytest.raises(ValueError, match="unknown config keys: viscosity"):
            load_config(p)

    def test_case_required(self, tmp_path):
        p = tmp_path / "exp.toml"
        p.write_text("m = 4\n")
        with pytest.raises(ValueError, match="case"):
            load_config(p)

    def test_validation_errors(self):
        with pytest.raises(ValueError, match="pair"):
            validate_config(ExperimentConfig(case="tests", nu1=(1.0, 2.0), nu2=(1.0,)))
        with pytest.raises(ValueError, match="variant"):
            validate_config(ExperimentConfig(case="tests", variant="fast"))
        with pytest.raises(ValueError, match="1, 2 or 3"):
            validate_config(ExperimentConfig(case="tests", tests=(0,)))
        with pytest.raises(ValueError, match="2x2x2"):
            validate_config(ExperimentConfig(case="tests", n=3))
        with pytest.raises(ValueError, match="unknown case"):
            validate_config(ExperimentConfig(case="table"))

    def test_spec_expansion(self):
        cfg = validate_config(ExperimentConfig(
            case="tests", m=(4, 6), nu1=(1e-1, 1.0), nu2=(1e-5, 1e-7)))
        specs = case_specs(cfg)
        assert len(specs) == 2 * 2 * 3
        assert len({s.label for s in specs}) == len(specs)
        cfg = validate_config(ExperimentConfig(case="irregular", inv_h=(10,), N=(8, 27)))
        assert len(case_specs(cfg)) == 2


def _fake_rows():
    return [
        ResultRow("alpha", "old", 8, 4, 10, 0, 3, 1.234, 0.5678, 0.9, True),
        ResultRow("alpha", "new", 8, 4, 9, 0, 9, 1.234, 0.4, 0.8, True),
        ResultRow("beta", "old", 27, 7, 61, 2, 5, 2.0, 1.0, 3.0, False),
    ]


class TestTables:
    def test_cell_format(self):
        assert _fake_rows()[0].cell() == "10(0,3)"

    def test_csv_roundtrip(self, tmp_path):
        rows = _fake_rows()
        csv_path, txt_path = emit_tables(rows, tmp_path)
        assert csv_path.exists() and txt_path.exists()
        back = parse_results_csv(csv_path)
        assert len(back) == len(rows)
        for a, b in zip(back, rows):
            assert (a.case, a.variant, a.N, a.m, a.iters, a.pnumF, a.pnumE,
                    a.converged) == (b.case, b.variant, b.N, b.m, b.iters,
                                     b.pnumF, b.pnumE, b.converged)
            assert a.gevp_s == pytest.approx(b.gevp_s, abs=5e-4)

    def test_single_row_csv(self, tmp_path):
        csv_path, _ = emit_tables(_fake_rows()[:1], tmp_path)
        lines = csv_path.read_text().strip().splitlines()
        assert len(lines) == 2
        assert lines[0] == "case,variant,N,m,iters,pnumF,pnumE,setup_s,gevp_s,solve_s,converged"

    def test_empty_rows_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="no result rows"):
            emit_tables([], tmp_path)

    def test_text_table_layout(self):
        text = format_table(_fake_rows())
        assert "10(0,3)" in text and "9(0,9)" in text
        assert "61(2,5)*" in text  # non-converged marker
        lines = text.splitlines()
        assert lines[0].split()[:3] == ["case", "N", "m"]
        assert "-" in lines[2]  # beta has no new-variant column


@functools.lru_cache(maxsize=None)
def small_rows():
    cfg = validate_config(ExperimentConfig(
        case="tests", m=(3,), tests=(1,), nu1=(1e-1,), nu2=(1e-5,)))
    return tuple(run_case(cfg))


class TestRunCase:
    def test_row_structure(self):
        rows = small_rows()
        assert [r.variant for r in rows] == ["old", "new"]
        for r in rows:
            assert r.converged and r.iters <= 60
            assert r.N == 8 and r.m == 3

    def test_variant_comparability(self):
        old, new = small_rows()
        assert old.pnumF == new.pnumF
        assert new.pnumE <= old.pnumE
        assert old.setup_s == new.setup_s  # shared setup, charged equally

    def test_determinism(self):
        cfg = validate_config(ExperimentConfig(
            case="tests", m=(3,), tests=(1,), nu1=(1e-1,), nu2=(1e-5,)))
        again = run_case(cfg)
        key = lambda r: (r.case, r.variant, r.N, r.m, r.iters, r.pnumF,
                         r.pnumE, r.converged)
        assert [key(r) for r in again] == [key(r) for r in small_rows()]

    def test_single_variant_run(self):
        cfg = validate_config(ExperimentConfig(
            case="tests", m=(3,), tests=(2,), nu1=(1.0,), nu2=(1.0,),
            variant="new"))
        rows = run_case(cfg)
        assert [r.variant for r in rows] == ["new"]

    def test_random_case_seeded(self):
        cfg = validate_config(ExperimentConfig(case="random", m=(3,), seed=5))
        rows = run_case(cfg)
        assert len(rows) == 2 and all(r.converged for r in rows)


class TestCli:
    def test_run_and_outputs(self, tmp_path, capsys):
        p = tmp_path / "exp.toml"
        p.write_text('case = "tests"\nm = 3\ntests = [1]\nnu1 = 1e-1\nnu2 = 1e-5\n')
        code = cli_main(["run", "--config", str(p), "--out", str(tmp_path / "o")])
        assert code == 0
        assert (tmp_path / "o" / "results.csv").exists()
        assert (tmp_path / "o" / "results.txt").exists()
        out = capsys.readouterr().out
        assert "case" in out and "old" in out

    def test_compare_forces_both(self, tmp_path):
        p = tmp_path / "exp.toml"
        p.write_text('case = "tests"\nm = 3\ntests = [1]\nvariant = "old"\n'
                     f'out = "{tmp_path / "o"}"\n')
        assert cli_main(["compare", "--config", str(p)]) == 0
        rows = parse_results_csv(tmp_path / "o" / "results.csv")
        assert sorted({r.variant for r in rows}) == ["new", "old"]

    def test_variant_override(self, tmp_path):
        p = tmp_path / "exp.toml"
        p.write_text(f'case = "tests"\nm = 3\ntests = [1]\nout = "{tmp_path / "o"}"\n')
        assert cli_main(["run", "--config", str(p), "--variant", "new"]) == 0
        rows = parse_results_csv(tmp_path / "o" / "results.csv")
        assert {r.variant for r in rows} == {"new"}

    def test_check_command(self, capsys):
        assert cli_main(["check"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_bad_config_exits_nonzero(self, tmp_path, capsys):
        p = tmp_path / "exp.toml"
        p.write_text('case = "nope"\n')
        assert cli_main(["run", "--config", str(p)]) == 2
        assert "unknown case" in capsys.readouterr().err
