import json
import shutil

import pytest

from mcast_testgen import cli
from mcast_testgen.pimdm import model_path


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_fitg_two_routers(capsys):
    code, out, _ = run(capsys, "fitg", "--model", "pim-dm.json", "--routers", "2", "--algorithm", "reduced")
    assert code == cli.EXIT_FOUND
    assert [l for l in out.splitlines() if l.startswith("error ")] == ["error {F:1,NF:1} Error(wasted-bandwidth)"]


def test_fitg_prune_loss_writes_files(capsys, tmp_path):
    code, out, _ = run(capsys, "fitg", "--routers", "3", "--fault", "loss:Prune", "--out", str(tmp_path))
    assert code == cli.EXIT_FOUND
    assert "{NF:1,NH:1,NC:1}" in out
    assert sorted(p.name for p in tmp_path.iterdir()) == ["manifest.json", "stats.csv", "traces.txt"]
    head = (tmp_path / "stats.csv").read_text().splitlines()[0]
    assert head == "n,algorithm,expanded,forwards,transitions,errors"
    code, out, _ = run(capsys, "replay", str(tmp_path / "traces.txt"))
    assert code == 0 and "0 failed" in out


def test_fitg_clean_exit(capsys, tmp_path):
    doc = json.loads(open(model_path(), encoding="utf-8").read())
    doc["correctness"] = {"1": ["X^*"], "2": ["X^*"]}
    doc["error_classes"] = {}
    (tmp_path / "lax.json").write_text(json.dumps(doc))
    code, out, _ = run(capsys, "fitg", "--routers", "2", "--model", str(tmp_path / "lax.json"))
    assert code == cli.EXIT_CLEAN and "errors=0" in out


@pytest.mark.parametrize("argv,needle", [
    (["fitg", "--routers", "0"], "at least 1"),
    (["fitg", "--routers", "2", "--fault", "loss:Nope"], "valid: Join"),
    (["fitg", "--routers", "2", "--fault", "crash:QQ"], "valid: F"),
    (["fitg", "--routers", "2", "--fault", "drop:Join"], "loss:STIM"),
    (["fitg", "--routers", "2", "--algorithm", "fast"], "reduced"),
    (["fotg", "--target", "Nope"], "valid: Join"),
    (["count", "--routers-max", "0"], "at least 1"),
    (["fitg", "--routers", "2", "--model", "missing.json"], "not found"),
    ([], "required"),
])
def test_usage_errors(capsys, argv, needle):
    code, _, err = run(capsys, *argv)
    assert code == cli.EXIT_FAILURE
    assert needle in err


def test_broken_model_is_failure(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"states": []}')
    code, _, err = run(capsys, "fitg", "--routers", "2", "--model", str(bad))
    assert code == cli.EXIT_FAILURE and "cannot load" in err


def test_model_search_path(capsys, tmp_path, monkeypatch):
    shutil.copy(model_path(), tmp_path / "lan.json")
    monkeypatch.setenv(cli.MODEL_PATH_ENV, str(tmp_path))
    code, out, _ = run(capsys, "fitg", "--routers", "2", "--model", "lan")
    assert code == cli.EXIT_FOUND and "{F:1,NF:1}" in out


def test_fotg_join(capsys, tmp_path):
    code, out, _ = run(capsys, "fotg", "--target", "Join", "--fault", "loss", "--out", str(tmp_path))
    assert code == cli.EXIT_FOUND
    assert "candidate {NF:1,NH:1,NC:1} Reached" in out
    assert "{NF:1,NH:1,NC:1} <- Prune <- {F:1,NH:1,NC:1} <- FPkt <- {F:1,M:1,NM:1} <- SPkt" in out
    stats = (tmp_path / "stats.csv").read_text().splitlines()
    assert stats[0] == "target,candidate,status,backwardCalls,rewindCalls,backtracks,reachable"
    assert run(capsys, "replay", str(tmp_path / "traces.txt"))[0] == 0


def test_fotg_assert(capsys):
    code, out, _ = run(capsys, "fotg", "--target", "Assert")
    assert code == cli.EXIT_FOUND
    assert "candidate {F:2} Reached" in out
    assert "forward -> {F:1,NF:1} Error(wasted-bandwidth)" in out


def test_fotg_graft_interleave(capsys, tmp_path):
    code, out, _ = run(capsys, "fotg", "--target", "Graft", "--fault", "loss", "--interleave", "--out", str(tmp_path))
    assert code == cli.EXIT_FOUND
    assert "scenario III {NF:1,NH:1} Error(black-hole)" in out
    assert "scenario I {F:1,NH:1} Correct" in out
    assert run(capsys, "replay", str(tmp_path / "traces.txt"))[0] == 0


def test_fotg_crash(capsys, tmp_path):
    code, out, _ = run(capsys, "fotg", "--target", "NC", "--fault", "crash", "--out", str(tmp_path))
    assert code == cli.EXIT_FOUND
    assert "join-latency" in out
    assert (tmp_path / "crash.csv").read_text().startswith("symbol,before,trigger")


def test_count(capsys):
    code, out, _ = run(capsys, "count", "--routers-max", "3", "--definition", "both", "--oracle")
    lines = out.splitlines()
    assert code == 0
    assert lines[0] == "n,definition,total,correct,error,correctPct,oracleTotal,oracleCorrect,oracleError,agree"
    assert len(lines) == 1 + 2 * 3
    assert lines[3].startswith("2,1,55,37,18,") and lines[3].endswith(",true")


def test_count_large_closed_form(capsys):
    code, out, _ = run(capsys, "count", "--routers-max", "14", "--definition", "2")
    assert code == 0 and out.splitlines()[-1].startswith("14,2,817190,")


def test_outputs_are_byte_identical(capsys, tmp_path):
    for d in ("a", "b"):
        run(capsys, "fitg", "--routers", "3", "--fault", "loss:Join", "--out", str(tmp_path / d))
    for name in ("traces.txt", "stats.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["subcommand"] == "fitg" and manifest["deterministic"] is True


def test_replay_detects_tampering(capsys, tmp_path):
    run(capsys, "fitg", "--routers", "2", "--out", str(tmp_path))
    p = tmp_path / "traces.txt"
    p.write_text(p.read_text().replace("-> {F:1,NF:1}", "-> {NF:2}"))
    code, out, _ = run(capsys, "replay", str(p))
    assert code == cli.EXIT_FAILURE and "FAILED" in out


def test_replay_crash_file(capsys, tmp_path):
    run(capsys, "fitg", "--routers", "2", "--fault", "crash:F", "--out", str(tmp_path))
    code, out, _ = run(capsys, "replay", str(tmp_path / "traces.txt"))
    assert code == 0, out
