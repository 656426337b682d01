import json
from pathlib import Path

import pytest

from nvmagnon import cli
from nvmagnon.config import apply_overrides, load_config, parse_config, resolve_params
from nvmagnon.errors import BudgetExceededError, ConfigError
from nvmagnon.results import read_csv
from nvmagnon.scenarios import run_scenario

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

RABI = """
scenario = "rabi"
units = "f"
[params]
G_k = 0.5
xi = 1.0
omega_q_gk = 10.0
[time]
stop = 3.0
points = 31
"""


def write(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def body(path):
    return [line for line in Path(path).read_text().splitlines() if not line.startswith("# timestamp")]


def test_validation_reports_every_problem(tmp_path, capsys):
    cfg = write(tmp_path, """
scenario = "rabbi"
units = "hz"
colour = "red"
[params]
G_k = "fast"
kappa_l = -1.0
[space]
fock_l = 1
[[sweep]]
name = "not_a_param"
start = 0
stop = 1
points = 0
""")
    assert cli.main(["simulate", str(cfg)]) == 2
    err = capsys.readouterr().err
    for fragment in ("scenario must be one of", "units must be", "unknown top-level key 'colour'",
                     "params.G_k must be float", "params.kappa_l must be non-negative",
                     "space.fock_l", "not_a_param", "points must be"):
        assert fragment in err


def test_unknown_nested_key_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config({"scenario": "enhancement", "solver": {"rtoll": 1e-3}})
    assert "unknown key solver.rtoll" in str(info.value)


def test_blockade_requires_probe():
    with pytest.raises(ConfigError, match="needs params.probe"):
        parse_config({"scenario": "blockade-sweep", "params": {"G_k": 0.5, "omega_q": 1.0}})


def test_unit_conversion():
    cfg = parse_config({"scenario": "rabi", "units": "f",
                        "params": {"G_k": 0.5, "omega_q_gk": 10.0, "kappa_l": 0.1, "temperature": 30.0}})
    p = resolve_params(cfg)
    two_pi = 2 * 3.141592653589793
    assert p["G_k"] == pytest.approx(two_pi * 0.5e6)
    assert p["omega_q"] == pytest.approx(10 * two_pi * 0.5e6)
    assert p["kappa_l"] == pytest.approx(two_pi * 1e5)
    assert p["temperature"] == pytest.approx(0.03)
    omega = parse_config({"scenario": "rabi", "units": "omega", "params": {"G_k": 2.0, "omega_q": 1.0}})
    assert resolve_params(omega)["G_k"] == pytest.approx(2e6)


def test_output_is_deterministic_and_thread_independent(tmp_path):
    cfg = write(tmp_path, RABI + """
[[sweep]]
name = "xi"
start = 0.0
stop = 1.0
points = 4
""")
    a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
    assert cli.main(["simulate", str(cfg), "--out", str(a), "--threads", "1"]) == 0
    assert cli.main(["simulate", str(cfg), "--out", str(b), "--threads", "4"]) == 0
    assert cli.main(["simulate", str(cfg), "--out", str(c), "--threads", "3"]) == 0
    assert body(a) == body(b) == body(c)
    table = read_csv(a)
    assert table.columns[:3] == ["xi", "t_s", "gk_t"]
    assert len(table) == 4 * 31
    assert len(table.metadata["config_hash"]) == 64


def test_env_thread_default(tmp_path, monkeypatch):
    monkeypatch.setenv("NVMAGNON_THREADS", "2")
    from nvmagnon.scenarios import default_threads
    assert default_threads() == 2
    monkeypatch.setenv("NVMAGNON_THREADS", "many")
    with pytest.raises(ConfigError):
        default_threads()


def test_override_changes_hash_and_result(tmp_path):
    cfg = write(tmp_path, RABI)
    base = run_scenario(load_config(cfg))
    over = run_scenario(load_config(cfg, ["params.xi=0.0"]))
    assert base.metadata["config_hash"] != over.metadata["config_hash"]
    assert base.column("qubit") != over.column("qubit")
    raw = apply_overrides({"params": {"xi": 1.0}}, ["params.xi=2", "solver.method=\"rk4\"", "time.unit=us"])
    assert raw == {"params": {"xi": 2}, "solver": {"method": "rk4"}, "time": {"unit": "us"}}
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])


def test_degenerate_sweep_equals_single_run(tmp_path):
    single = run_scenario(load_config(write(tmp_path, RABI)))
    swept = run_scenario(load_config(write(tmp_path, RABI + """
[[sweep]]
name = "xi"
start = 1.0
stop = 1.0
points = 1
""", "swept.toml")))
    idx = swept.columns.index("qubit")
    assert [row[idx] for row in swept.rows] == single.column("qubit")


def test_budget_refusal_suggests_coarsening(tmp_path, capsys):
    cfg = write(tmp_path, """
scenario = "enhancement"
[solver]
budget = 100
[[sweep]]
name = "xi"
start = 0
stop = 1
points = 50
[[sweep]]
name = "G_k"
start = 0.1
stop = 1
points = 50
""")
    with pytest.raises(BudgetExceededError, match="suggested coarsening"):
        run_scenario(load_config(cfg))
    assert cli.main(["simulate", str(cfg)]) == 2
    assert "xi: 50 -> 10 points" in capsys.readouterr().err


def test_solver_failure_exit_code(tmp_path, capsys):
    # without coupling the right mode and qubit are undamped: the steady state is not unique
    cfg = write(tmp_path, """
scenario = "custom"
[params]
G_k = 0.0
kappa_l = 0.1
[options]
evolution = "steady"
""")
    assert cli.main(["simulate", str(cfg)]) == 3
    assert "custom at base point" in capsys.readouterr().err


def test_leakage_hard_limit_exit_code(tmp_path):
    cfg = write(tmp_path, RABI + """
[options]
initial = [2, 0, 1]
""")
    assert cli.main(["simulate", str(cfg)]) == 4


def test_json_mirror_and_metadata(tmp_path):
    cfg = write(tmp_path, RABI)
    out = tmp_path / "rabi.csv"
    assert cli.main(["simulate", str(cfg), "--out", str(out), "--json"]) == 0
    payload = json.loads((tmp_path / "rabi.json").read_text())
    assert payload["columns"] == ["t_s", "gk_t", "n_l", "n_r", "qubit"]
    assert payload["units"]["t_s"] == "s"
    assert "coupling:exact" in payload["metadata"]["flags"]
    table = read_csv(out)
    assert table.rows == payload["rows"]


def test_blockade_flags_record_open_question_choices():
    cfg = load_config(CONFIGS / "fig5c_blockade_xi2.toml", ["sweep=[]"])
    table = run_scenario(cfg)
    flags = table.metadata["flags"]
    assert "rates:dissipative-rabi-defaults" in flags
    assert "amplitudes:rederived" in flags
    assert len(table) == 1


def test_shipped_configs_parse():
    for path in sorted(CONFIGS.glob("*.toml")):
        load_config(path)


def test_stdout_when_no_output(tmp_path, capsys):
    cfg = write(tmp_path, 'scenario = "enhancement"\n[params]\nxi = 2.0\n')
    assert cli.main(["simulate", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[-1].startswith("2.0,")
