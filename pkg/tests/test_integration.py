"""
Integration tests for jmgt-sim.

These tests run the shipped scenarios end to end through the scenario
manager and the command-line entry point.
"""

import csv
import json
from pathlib import Path

import pytest

from jmgt_sim.cli.config import load_config, parse_config
from jmgt_sim.cli.main import EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, main
from jmgt_sim.cli.scenarios import default_manager
from jmgt_sim.core.diagnostics import CSV_COLUMNS
from jmgt_sim.core.exceptions import ValidationError

CONFIGS = Path(__file__).parent.parent / "configs"


def config_text(scenario, kernel='type = "dirac"', solver="", extra=""):
    return f"""
scenario = "{scenario}"

[solver]
tau = 1.0
c = 1.0
delta = 0.5
sigma = 1.0
dt = 1e-2
T = 0.5
{solver}

[kernel]
{kernel}

[domain]
lengths = ["pi"]
modes = [8]

[initial]
preset = "single_mode"
amplitude = 1e-2

{extra}
"""


@pytest.fixture
def manager():
    """Manager with every shipped scenario."""
    return default_manager(log_level="WARNING")


def write_config(tmp_path, text):
    path = tmp_path / "run.toml"
    path.write_text(text, encoding="utf-8")
    return path


def read_verdicts(out_dir):
    return json.loads((out_dir / "checks.json").read_text(encoding="utf-8"))


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.reader(handle))


def test_simulate_scenario(manager, tmp_path):
    """Test a Dirac run passes every standard check and writes its files."""
    config = parse_config(config_text("simulate"), env={}).with_output(tmp_path)
    result = manager.run(config)

    assert result.passed, result.to_dict()
    names = {check.name for check in result.checks}
    assert {"run_completed", "energy_identity", "dissipation_inequality", "z_relation"} <= names
    rows = read_csv(tmp_path / "energies.csv")
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 1 + 51
    verdicts = read_verdicts(tmp_path)
    assert verdicts["verdict"] == "PASS"
    assert verdicts["summary"]["termination"] == "completed"
    assert verdicts["summary"]["boundary_gradient_residual"] is not None


def test_simulate_with_memory_kernel(manager, tmp_path):
    """Test an Abel run completes and records the stride."""
    text = config_text("simulate", kernel='type = "abel"\nalpha = 0.5', extra="[output]\nstride = 5\n")
    config = parse_config(text, env={}).with_output(tmp_path)
    result = manager.run(config)

    assert result.summary["termination"] == "completed"
    assert result.summary["records"] == 11
    assert result.summary["eta_hat"] > 0.0
    assert len(read_csv(tmp_path / "energies.csv")) == 12


def test_small_data_global_short(manager, tmp_path):
    """Test the small-data scenario reports plateau and bootstrap checks."""
    text = config_text(
        "small_data_global",
        solver="T = 2.0",
        extra='[source]\npreset = "decaying_mode"\namplitude = 1e-3\n[output]\nstride = 10\n',
    ).replace("T = 0.5\n", "")
    config = parse_config(text, env={}).with_output(tmp_path)
    result = manager.run(config)

    names = [check.name for check in result.checks]
    assert "Y_plateau" in names
    assert "bootstrap_constant" in names
    assert not result.failed
    assert result.summary["source_w11_norm"] > 0.0


def test_small_data_global_zero_data(manager, tmp_path):
    """Test zero data skips the bootstrap constant."""
    text = config_text("small_data_global").replace('preset = "single_mode"\namplitude = 1e-2', 'preset = "zero"')
    config = parse_config(text, env={}).with_output(tmp_path)
    result = manager.run(config)
    assert "bootstrap_constant" not in [check.name for check in result.checks]


def test_inviscid_growth_writes_both_runs(manager, tmp_path):
    """Test the undamped and damped runs are both recorded."""
    text = config_text("inviscid_growth", extra="[study]\nmax_workers = 2\n")
    config = parse_config(text, env={}).with_output(tmp_path)
    result = manager.run(config)

    assert (tmp_path / "energies.csv").exists()
    assert (tmp_path / "energies_damped.csv").exists()
    names = [check.name for check in result.checks]
    assert names == ["inviscid_growth", "damping_contrast"]
    assert result.summary["inviscid"]["termination"] == "completed"


def test_kernel_compare(manager, tmp_path):
    """Test one run and one table row per kernel."""
    extra = """
[study]
kernels = [{ type = "exponential", beta = 1.0 }, { type = "dirac" }]
max_workers = 2
"""
    config = parse_config(config_text("kernel_compare", extra=extra), env={}).with_output(tmp_path)
    result = manager.run(config)

    table = read_csv(tmp_path / "kernel_compare.csv")
    assert table[0][0] == "kernel"
    assert len(table) == 3
    assert (tmp_path / "energies_0_exponential.csv").exists()
    assert (tmp_path / "energies_1_dirac.csv").exists()
    names = {check.name for check in result.checks}
    assert "run_completed[1:dirac]" in names
    assert any(name.startswith("energy_identity[0:") for name in names)


def test_kernel_compare_rejects_bad_kernel(manager):
    """Test invalid kernel tables fail validation."""
    extra = '[study]\nkernels = [{ type = "abel", alpha = 2.0 }]\n'
    config = parse_config(config_text("kernel_compare", extra=extra), env={})
    with pytest.raises(ValidationError) as exc_info:
        manager.validate(config)
    assert exc_info.value.key == "study.kernels"


def test_convergence_study_manufactured(manager, tmp_path):
    """Test second-order convergence against the manufactured solution."""
    text = config_text(
        "convergence_study",
        kernel='type = "abel"\nalpha = 0.5',
        extra="[study]\nlevels = 3\nmin_order = 1.5\n",
    ).replace("tau = 1.0", "tau = 0.8").replace("dt = 1e-2", "dt = 5e-2")
    config = parse_config(text, env={}).with_output(tmp_path)
    result = manager.run(config)

    assert result.passed, result.to_dict()
    rows = read_csv(tmp_path / "convergence.csv")
    assert rows[0] == ["dt", "error", "order"]
    assert len(rows) == 4
    assert result.summary["tau"] == 0.8


def test_convergence_study_ode_reference(manager, tmp_path):
    """Test convergence against the dense single-mode reference."""
    text = config_text("convergence_study", extra="[study]\nlevels = 3\nreference = \"ode\"\n")
    text = text.replace("tau = 1.0", "tau = 0.8").replace("dt = 1e-2", "dt = 5e-2")
    config = parse_config(text, env={}).with_output(tmp_path)
    result = manager.run(config)
    assert result.passed, result.to_dict()


@pytest.mark.parametrize(
    "kernel, extra",
    [
        ('type = "polynomial"\np = 2.0', "[study]\nlevels = 3\n"),
        ('type = "abel"\nalpha = 0.5', '[study]\nreference = "ode"\n'),
        ('type = "dirac"', "[study]\nlevels = 1\n"),
        ('type = "dirac"', '[study]\nreference = "exact"\n'),
    ],
)
def test_convergence_study_validation(manager, kernel, extra):
    """Test unsupported references and level counts are rejected."""
    config = parse_config(config_text("convergence_study", kernel=kernel, extra=extra), env={})
    with pytest.raises(ValidationError):
        manager.validate(config)


def test_positivity_suite(manager, tmp_path):
    """Test the admissibility checks over one family."""
    extra = """
[study]
families = ["exponential"]
steps = 32
trials = 50
include_config_kernel = false
"""
    text = config_text("positivity_suite", kernel='type = "abel"\nalpha = 0.5', extra=extra)
    config = parse_config(text, env={}).with_output(tmp_path)
    result = manager.run(config)

    names = [check.name for check in result.checks]
    assert result.summary["kernels"] == ["exponential(beta=0.5)", "exponential(beta=1)", "exponential(beta=2)"]
    assert sum(name.startswith("monotonicity[") for name in names) == 3
    assert sum(name.startswith("discrete_positivity[") for name in names) == 3
    assert sum(name.startswith("strong_positivity[") for name in names) == 3


def test_positivity_suite_rejects_family(manager):
    """Test unknown families fail validation."""
    text = config_text("positivity_suite", extra='[study]\nfamilies = ["gamma"]\n')
    with pytest.raises(ValidationError):
        manager.validate(parse_config(text, env={}))


def test_cli_run_pass(tmp_path, capsys):
    """Test the run command exits 0 and prints the verdict."""
    path = write_config(tmp_path, config_text("simulate"))
    out = tmp_path / "out"
    status = main(["--log-level", "WARNING", "run", str(path), "--out", str(out), "--stride", "10"])
    assert status == EXIT_PASS
    assert "simulate: PASS" in capsys.readouterr().out
    assert len(read_csv(out / "energies.csv")) == 1 + 6
    assert read_verdicts(out)["verdict"] == "PASS"


def test_cli_syntax_error(tmp_path, capsys):
    """Test a TOML syntax error exits 2 and reports its position."""
    path = write_config(tmp_path, 'scenario = "simulate"\n[kernel\n')
    status = main(["run", str(path), "--out", str(tmp_path / "out")])
    assert status == EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err


def test_cli_unknown_key(tmp_path, capsys):
    """Test an unknown study key exits 2 and names the key."""
    path = write_config(tmp_path, config_text("simulate", extra="[study]\nlevles = 3\n"))
    status = main(["run", str(path), "--out", str(tmp_path / "out")])
    assert status == EXIT_CONFIG
    assert "study.levles" in capsys.readouterr().err
    assert not (tmp_path / "out" / "checks.json").exists()


def test_cli_bad_stride(tmp_path, capsys):
    """Test --stride 0 exits 2 before any run."""
    path = write_config(tmp_path, config_text("simulate"))
    status = main(["run", str(path), "--out", str(tmp_path / "out"), "--stride", "0"])
    assert status == EXIT_CONFIG
    assert "output.stride" in capsys.readouterr().err
    assert not (tmp_path / "out" / "energies.csv").exists()


def test_cli_missing_file(tmp_path, capsys):
    """Test an unreadable config exits 2."""
    status = main(["run", str(tmp_path / "missing.toml")])
    assert status == EXIT_CONFIG
    assert "cannot read config" in capsys.readouterr().err


def test_cli_failing_check_exits_one(tmp_path):
    """Test a failing check gives exit status 1."""
    extra = "[study]\nidentity_rtol = 0.0\n"
    text = config_text("simulate", kernel='type = "abel"\nalpha = 0.5', extra=extra)
    path = write_config(tmp_path, text)
    out = tmp_path / "out"
    status = main(["--log-level", "ERROR", "run", str(path), "--out", str(out)])
    assert status == EXIT_FAIL
    verdicts = read_verdicts(out)
    assert verdicts["verdict"] == "FAIL"
    assert verdicts["checks"]["energy_identity"]["verdict"] == "FAIL"


def test_cli_check_kernel(tmp_path):
    """Test check-kernel writes verdicts for the configured kernel."""
    text = config_text("simulate", kernel='type = "exponential"\nbeta = 1.0')
    path = write_config(tmp_path, text)
    out = tmp_path / "kernel"
    status = main(["--log-level", "WARNING", "check-kernel", str(path), "--out", str(out)])
    verdicts = read_verdicts(out)
    assert verdicts["scenario"] == "check_kernel"
    names = set(verdicts["checks"])
    assert any(name.startswith("soe_fit[") for name in names)
    assert any(name.startswith("monotonicity[") for name in names)
    assert status == (EXIT_PASS if verdicts["verdict"] == "PASS" else EXIT_FAIL)


def test_cli_check_kernel_dirac(tmp_path):
    """Test the Dirac kernel passes the admissibility suite trivially."""
    path = write_config(tmp_path, config_text("simulate"))
    status = main(["check-kernel", str(path), "--out", str(tmp_path / "kernel")])
    assert status == EXIT_PASS


def test_cli_list(capsys):
    """Test the list command prints every scenario."""
    assert main(["list"]) == EXIT_PASS
    out = capsys.readouterr().out
    for name in ("simulate", "small_data_global", "inviscid_growth", "convergence_study"):
        assert name in out


@pytest.mark.slow
def test_small_data_global_desk_scale(manager, tmp_path):
    """Test the shipped small-data config: completion, plateau and bootstrap."""
    config = load_config(CONFIGS / "small_data_global.toml", env={}).with_output(tmp_path)
    result = manager.run(config)
    assert result.passed, result.to_dict()
    assert result.summary["max_picard_iterations"] <= 10


@pytest.mark.slow
def test_convergence_study_shipped_config(manager, tmp_path):
    """Test the shipped convergence config reaches second order."""
    config = load_config(CONFIGS / "convergence_study.toml", env={}).with_output(tmp_path)
    assert manager.run(config).passed


@pytest.mark.slow
def test_inviscid_growth_shipped_config(manager, tmp_path):
    """Test delta = 0 at amplitude 5 grows tenfold or ends non-finite, and damping grows less."""
    config = load_config(CONFIGS / "inviscid_growth.toml", env={}).with_output(tmp_path)
    assert config.solver.delta == 0.0
    assert config.initial.amplitude == 5.0
    result = manager.run(config)
    checks = {check.name: check for check in result.checks}
    growth = checks["inviscid_growth"]
    assert growth.passed, growth.measured
    assert (
        growth.measured["growth_factor"] >= 10.0
        or growth.measured["termination"] in ("non_finite", "picard_divergence")
    )
    assert checks["damping_contrast"].passed, checks["damping_contrast"].measured
