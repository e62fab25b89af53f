import io
import json
import os
import subprocess
import sys

import pytest

from pkit.cli import run


def call(*argv):
    out = io.StringIO()
    code = run(list(argv), out)
    return code, out.getvalue()


@pytest.fixture
def ex(root):
    return lambda name: os.path.join(root, "examples", name)


@pytest.fixture
def cp(corpus_dir):
    return lambda name: os.path.join(corpus_dir, name)


def test_decide_parity(ex):
    code, text = call("decide", ex("parity.pres"))
    assert code == 0 and text.strip() == "true"


def test_decide_false_exits_one(tmp_path):
    p = tmp_path / "f.pres"
    p.write_text("exists x. 2*x == 1\n")
    code, text = call("decide", str(p))
    assert code == 1 and text.strip() == "false"


def test_dim_graph(ex):
    code, text = call("dim", ex("graph.pres"))
    assert code == 0 and text.strip() == "1"


def test_abelianize_modH_json(ex):
    code, text = call("group", "abelianize", ex("modH.group"), "--json")
    doc = json.loads(text)
    assert code == 0 and doc["schema"] == "pkit/1" and doc["command"] == "group"
    res = doc["result"]
    assert res["ok"] and res["dim_H"] == res["dim_G"]


def test_usage_errors(tmp_path, cp):
    assert call("decide", cp("qe01_even.pres"))[0] == 2
    bad = tmp_path / "bad.pres"
    bad.write_text("x <= \n")
    assert call("qe", str(bad))[0] == 2
    junk = tmp_path / "bad.group"
    junk.write_text("{not json")
    assert call("group", "verify", str(junk))[0] == 2
    assert call("nosuchcommand")[0] == 2


def test_budget_exit_three(cp):
    code, _ = call("qe", cp("qe43_frobenius_5_7.pres"), "--budget", "5")
    assert code == 3


def test_sat_and_cells(tmp_path):
    p = tmp_path / "s.pres"
    p.write_text("0 <= x and x <= 10 and x == 3*y + 1\n")
    code, text = call("sat", str(p), "--json", "--vars", "x,y")
    doc = json.loads(text)["result"]
    assert code == 0 and doc["result"] is True and doc["witness"]
    code, text = call("cells", str(p), "--certify", "--vars", "x,y")
    assert code == 0


def test_group_controls(cp):
    assert call("group", "verify", cp("Z12.group"))[0] == 0
    code, text = call("group", "verify", cp("nonassoc_control.group"))
    assert code == 1 and "FAIL" in text


def test_lattice_commands(cp):
    code, text = call("lattice", "check", cp("multiples_of_4_bad.lattice"), "--json")
    assert code == 1
    assert call("lattice", "quotient", cp("skew.lattice"))[0] == 0
    code, text = call("lattice", "ladder", cp("Z12.lattice"), "--json", "--trials", "200")
    res = json.loads(text)["result"]
    assert code == 0 and res["ladder"]["n_star"] <= 3 and res["isomorphism"]["ok"]


def test_json_is_deterministic(cp):
    a = call("lattice", "ladder", cp("Z6xZ4.lattice"), "--json", "--trials", "200")[1]
    b = call("lattice", "ladder", cp("Z6xZ4.lattice"), "--json", "--trials", "200")[1]
    assert a == b and "ms" not in a


def test_corpus_runner(tmp_path, cp):
    for name in ("qe01_even.pres", "qe41_parity_sentence.pres", "Z7.group"):
        (tmp_path / name).write_text(open(cp(name)).read())
    code, text = call("corpus", str(tmp_path), "--json", "--workers", "2")
    doc = json.loads(text)
    assert code == 0 and "pkit/1" == doc["schema"]
    assert len(doc["result"]["files"]) == 3
    (tmp_path / "broken.pres").write_text("x <=\n")
    assert call("corpus", str(tmp_path), "--workers", "1")[0] == 1


def test_plots_written(tmp_path, ex, cp):
    pytest.importorskip("matplotlib")
    targets = {
        "cells.png": ("cells", ex("graph.pres")),
        "ladder.png": ("lattice", "ladder", cp("Z12.lattice"), "--trials", "50"),
        "lat.png": ("lattice", "check", cp("square_12.lattice")),
    }
    for name, argv in targets.items():
        png = tmp_path / name
        call(*argv, "--plot", str(png))
        assert png.exists() and png.stat().st_size > 1000


def test_console_script(ex):
    r = subprocess.run([sys.executable, "-m", "pkit.cli", "decide", ex("parity.pres")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "true"
