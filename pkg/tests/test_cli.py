import shutil
import subprocess
import sys

import pytest

from flowthing.cli import main

from conftest import MODELS, SCENARIOS


@pytest.fixture
def workdir(tmp_path):
    for p in MODELS.glob("*.fm"):
        shutil.copy(p, tmp_path)
    for p in SCENARIOS.glob("*.fms"):
        shutil.copy(p, tmp_path)
    return tmp_path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_validate_ok(capsys, workdir):
    code, out, err = run(capsys, "validate", workdir / "procurement.fm")
    assert (code, out, err) == (0, "", "")


def test_validate_reports_diagnostics(capsys, tmp_path):
    f = tmp_path / "bad.fm"
    f.write_text("sphere S {\n  machine M of T {\n    stages: create, process\n  }\n}\n"
                 "flow S.M.process -> S.M.create\n")
    code, out, err = run(capsys, "validate", f)
    assert code == 1
    assert err == f"{f}:6:1: FM-E003 error: illegal succession process -> create inside 'S.M' (strict rules)\n"


def test_validate_warnings_only_exit_zero(capsys, tmp_path):
    f = tmp_path / "warn.fm"
    f.write_text("sphere S {\n  machine M of T {\n    stages: create\n  }\n}\n")
    code, _, err = run(capsys, "validate", f)
    assert code == 0 and "FM-W001 warning" in err


def test_validate_parse_error(capsys, tmp_path):
    f = tmp_path / "broken.fm"
    f.write_text("sphere S {")
    code, _, err = run(capsys, "validate", f)
    assert code == 2 and f"{f}:1:" in err and "parse error" in err


def test_ruleset_flag(capsys, tmp_path):
    f = tmp_path / "lenient.fm"
    f.write_text("sphere S {\n  machine M of T {\n    stages: create, transfer\n  }\n}\n"
                 "flow S.M.create -> S.M.transfer\n")
    assert run(capsys, "validate", f)[0] == 1
    assert run(capsys, "validate", f, "--ruleset", "lenient")[0] == 0


@pytest.mark.parametrize("argv", [
    [], ["bogus"], ["validate"], ["validate", "/no/such/file.fm"],
    ["render", "MODEL", "--level", "stages"], ["sim", "MODEL"], ["demo"],
    ["demo", "signature"], ["demo", "signature", "--message", "x", "--seed", "abc"],
])
def test_usage_errors(capsys, workdir, argv):
    argv = [str(workdir / "procurement.fm") if a == "MODEL" else a for a in argv]
    assert run(capsys, *argv)[0] == 3


def test_sim_to_stdout_and_file(capsys, workdir):
    model, sc = workdir / "procurement.fm", workdir / "procurement-accept.fms"
    code, out, _ = run(capsys, "sim", model, "--scenario", sc)
    assert code == 0 and out.startswith("time\ttoken_id\t")
    target = workdir / "log.tsv"
    assert run(capsys, "sim", model, "--scenario", sc, "--out", target)[0] == 0
    assert target.read_text() == out


def test_sim_errors(capsys, workdir):
    model = workdir / "procurement.fm"
    bad = workdir / "bad.fms"
    bad.write_text("inject one thing\n")
    assert run(capsys, "sim", model, "--scenario", bad)[0] == 2
    bad.write_text("inject 1 X at Nowhere.M.create time 0\n")
    assert run(capsys, "sim", model, "--scenario", bad)[0] == 4
    # order_accepted never decided
    bad.write_text("inject 1 StockLevel at Manufacturer.Storage.Stock.create time 0\n"
                   "decide lack_of_stock = true\n")
    out_file = workdir / "never.tsv"
    code, _, err = run(capsys, "sim", model, "--scenario", bad, "--out", out_file)
    assert code == 4 and "order_accepted" in err
    assert not out_file.exists()
    short = workdir / "short.fms"
    short.write_text((workdir / "procurement-accept.fms").read_text() + "maxsteps 1\n")
    assert run(capsys, "sim", model, "--scenario", short)[0] == 4


def test_sim_refuses_invalid_model(capsys, tmp_path, workdir):
    f = tmp_path / "bad.fm"
    f.write_text("sphere S {\n  machine M of T {\n    stages: create, create\n  }\n}\n")
    assert run(capsys, "sim", f, "--scenario", workdir / "procurement-accept.fms")[0] == 1


def test_render(capsys, workdir):
    code, out, _ = run(capsys, "render", workdir / "doc-signing.fm", "--level", "spheres")
    assert code == 0 and out.startswith("digraph fm {\n  rankdir=LR;\n")
    target = workdir / "out.dot"
    assert run(capsys, "render", workdir / "doc-signing.fm", "--rankdir", "TB",
               "--show-annotations", "--out", target)[0] == 0
    assert "rankdir=TB;" in target.read_text()


def test_fmt_canonicalizes(capsys, tmp_path):
    f = tmp_path / "messy.fm"
    f.write_text("# header\nflow S.M.create -> S.M.release\nsphere S { machine M of T "
                 "{ stages: create, release } }\n")
    assert run(capsys, "fmt", f)[0] == 0
    assert f.read_text() == ("sphere S {\n  machine M of T {\n    stages: create, release\n  }\n}\n\n"
                             "flow S.M.create -> S.M.release\n")
    before = f.stat().st_mtime_ns
    assert run(capsys, "fmt", f)[0] == 0
    assert f.stat().st_mtime_ns == before


def test_fmt_leaves_broken_file_alone(capsys, tmp_path):
    f = tmp_path / "broken.fm"
    f.write_text("sphere S {\n  machine")
    assert run(capsys, "fmt", f)[0] == 2
    assert f.read_text() == "sphere S {\n  machine"
    dup = tmp_path / "dup.fm"
    dup.write_text("sphere S { }\nsphere S { }\n")
    assert run(capsys, "fmt", dup)[0] == 1
    assert dup.read_text() == "sphere S { }\nsphere S { }\n"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["broken.fm", "dup.fm"]


def test_fmt_corpus_is_stable(capsys, workdir):
    for p in sorted(workdir.glob("*.fm")):
        text = p.read_text()
        assert run(capsys, "fmt", p)[0] == 0
        assert p.read_text() == text


def test_demo_signature(capsys):
    code, out, _ = run(capsys, "demo", "signature", "--message", "The check is in the mail.")
    assert code == 0
    lines = out.splitlines()
    assert lines[1].endswith(" + 46 = 2180") and lines[1].count(" + ") == 24
    assert "cipher: 2181" in lines
    assert lines[-1] == "verdict: authentic"


def test_demo_tamper(capsys):
    code, out, _ = run(capsys, "demo", "signature", "--message", "mail", "--tamper", "mbil", "--seed", "5")
    assert code == 0 and out.splitlines()[-1] == "tampered verdict: altered"
    code, out, _ = run(capsys, "demo", "signature", "--message", "ab", "--tamper", "ba")
    assert out.splitlines()[-1] == "tampered verdict: authentic"


def test_demo_edge_cases(capsys):
    code, out, _ = run(capsys, "demo", "signature", "--message", "")
    assert code == 0 and "hash: 0" in out
    assert run(capsys, "demo", "signature", "--message", "café")[0] == 3
    assert run(capsys, "demo", "signature", "--message", "ok", "--tamper", "né")[0] == 3


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "flowthing", "demo", "signature", "--message", "A"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "hash: 65 = 65" in proc.stdout
