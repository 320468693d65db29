import json
import subprocess
import sys

from evrp2e.cli import BAD_INPUT, FAILED, OK, main
from evrp2e.construct import construct
from evrp2e.instance import Variant, load_instance, parse_instance
from evrp2e.solution import Route, Solution, write_solution

from oracles import INSTANCES, path


def test_solve_to_stdout(capsys):
    assert main(["solve", "--instances", str(path("C101_C5x")), "--runs", "2"]) == OK
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("instance,dist,avg")
    assert out[1].startswith("C101_C5x,")


def test_solve_with_config_and_override(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"instances = {INSTANCES / 'C20*_C5x.txt'}\nalgo = insertion\nruns = 5\nformat = md\n")
    out = tmp_path / "r.md"
    assert main(["solve", "--config", str(cfg), "--runs", "1", "--out", str(out)]) == OK
    text = out.read_text()
    assert text.startswith("| Instance |")
    assert "C206_C5x" in text and "C208_C5x" in text
    assert capsys.readouterr().out == ""


def test_solve_failure_exit_code(capsys):
    assert main(["solve", "--instances", str(path("C101_21x")), "--algo", "exact"]) == FAILED
    assert "InstanceTooLarge" in capsys.readouterr().err


def test_bad_input_exit_codes(tmp_path, capsys):
    assert main(["solve", "--instances", str(tmp_path / "*.txt")]) == BAD_INPUT
    assert main(["solve"]) == BAD_INPUT
    assert main(["solve", "--instances", str(path("C101_C5x")), "--algo", "magic"]) == BAD_INPUT
    assert main(["solve", "--instances", str(path("C101_C5x")), "--rate", "70"]) == BAD_INPUT
    assert main(["validate", "--instance", "nope.txt", "--solution", "nope.json"]) == BAD_INPUT
    assert main([]) == BAD_INPUT


def test_validate_feasible(tmp_path, capsys):
    inst = load_instance(str(path("RC105_C5")), Variant.TW)
    write_solution(construct(inst), tmp_path / "s.json")
    code = main(["validate", "--instance", str(path("RC105_C5")), "--variant", "tw",
                 "--solution", str(tmp_path / "s.json")])
    assert code == OK
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("objective ") and out[1] == "feasible"


def test_validate_reports_violations(tmp_path, capsys):
    inst = load_instance(str(path("C101_C5x")))
    s = construct(inst)
    # drop the last EV route so some customers go unvisited
    broken = Solution(s.routes[:-1], s.assignment)
    write_solution(broken, tmp_path / "s.json")
    assert main(["validate", "--instance", str(path("C101_C5x")), "--solution", str(tmp_path / "s.json")]) == FAILED
    assert "violation Unvisited" in capsys.readouterr().out


def test_validate_malformed_solution(tmp_path):
    (tmp_path / "s.json").write_text("{not json")
    assert main(["validate", "--instance", str(path("C101_C5x")), "--solution", str(tmp_path / "s.json")]) == BAD_INPUT
    bad = Solution((Route(1, ("D0", "S1", "D0")), Route(2, ("S1", "C99", "S1"))), {"C99": "S1"})
    write_solution(bad, tmp_path / "t.json")
    assert main(["validate", "--instance", str(path("C101_C5x")), "--solution", str(tmp_path / "t.json")]) == BAD_INPUT


def test_export(tmp_path, capsys):
    assert main(["export", "--instance", str(path("C101_C5")), "--variant", "tw", "--out", str(tmp_path / "m.lp"),
                 "--satellite-copies", "1", "--station-copies", "5"]) == OK
    assert capsys.readouterr().out.strip() == "928 variables, 2096 constraints"
    assert (tmp_path / "m.lp").read_text().startswith("Minimize")
    assert main(["export", "--instance", str(path("C101_C5")), "--out", str(tmp_path / "m.mps")]) == OK
    assert (tmp_path / "m.mps").read_text().rstrip().endswith("ENDATA")
    assert main(["export", "--instance", str(path("C101_C5")), "--out", str(tmp_path / "m.txt")]) == BAD_INPUT


def test_transform_pd(tmp_path):
    out = tmp_path / "pd.txt"
    assert main(["transform-pd", "--instance", str(path("R104_C5x")), "--rate", "30", "--out", str(out)]) == OK
    inst = parse_instance(out, Variant.PD)
    assert len(inst.customers) == 10
    src = parse_instance(str(path("R104_C5x")))
    assert inst.total_delivery() == src.total_delivery()


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "evrp2e.cli", "validate", "--help"],
                          capture_output=True, text=True)
    assert done.returncode == 0 and "--solution" in done.stdout


def test_solutions_dir(tmp_path):
    assert main(["solve", "--instances", str(path("R203_C5x")), "--runs", "1", "--out", str(tmp_path / "r.csv"),
                 "--solutions", str(tmp_path / "sol")]) == OK
    data = json.loads((tmp_path / "sol" / "R203_C5x.base.json").read_text())
    assert data["instance"] == "R203_C5x"
