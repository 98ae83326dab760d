"""End-to-end checks of the command-line tool: mixing, separation, evaluation,
the demo reproduction, and bit-exact determinism under a fixed seed."""

import filecmp
import json
import os
import subprocess
import sys
import tempfile

CLI = os.environ.get("UNMIX_CLI", "unmix")


def run(*args, cwd=None, expect_failure=False):
    proc = subprocess.run([CLI, *args], capture_output=True, text=True, cwd=cwd)
    if expect_failure:
        assert proc.returncode != 0, f"expected failure: {args}\n{proc.stdout}{proc.stderr}"
    else:
        assert proc.returncode == 0, f"command failed: {args}\n{proc.stdout}{proc.stderr}"
    return proc


def test_mix_separate_eval(tmp):
    repro = os.path.join(tmp, "r1")
    run("repro", "--case", "2", "--seed", "3", "--duration", "2.5", "--outdir", repro)
    for name in (
        "sources.wav",
        "mixture.wav",
        "dynamic.wav",
        "batch.wav",
        "dynamic_report.csv",
        "dynamic_report.json",
        "batch_report.csv",
        "dynamic_diagnostics.jsonl",
    ):
        assert os.path.exists(os.path.join(repro, name)), name
    # no stray partial files
    assert not [f for f in os.listdir(repro) if f.endswith(".partial")]

    # diagnostics are JSON lines with one record per update
    with open(os.path.join(repro, "dynamic_diagnostics.jsonl")) as fh:
        records = [json.loads(line) for line in fh]
    assert len(records) >= 2
    assert "wls_residual" in records[0]

    # stand-alone mix + separate + eval on the repro sources
    filters = os.path.join(tmp, "filters.json")
    run("mix", "--dump-default-filters", filters)
    with open(filters) as fh:
        cfg = json.load(fh)
    assert cfg["n"] == 2 and cfg["P"] == 48 and len(cfg["taps"]) == 4

    mix_wav = os.path.join(tmp, "mix.wav")
    run("mix", "--filters", filters, os.path.join(repro, "sources.wav"), mix_wav)
    out1 = os.path.join(tmp, "out1.wav")
    out2 = os.path.join(tmp, "out2.wav")
    diag = os.path.join(tmp, "diag.jsonl")
    bank = os.path.join(tmp, "bank.json")
    run(
        "separate", "--mode", "dynamic", "--preset", "case2", "--nT", "80",
        "--diagnostics", diag, "--filters-out", bank, mix_wav, out1, out2,
    )
    assert os.path.exists(out1) and os.path.exists(out2)
    with open(bank) as fh:
        bank_doc = json.load(fh)
    assert bank_doc["T"] == 256 and len(bank_doc["h"]) == 4

    report = os.path.join(tmp, "report.csv")
    proc = run("eval", "--sources", os.path.join(repro, "sources.wav"), "--report", report,
               os.path.join(repro, "dynamic.wav"), os.path.join(repro, "mixture.wav"))
    assert "rho_bar(mixtures)" in proc.stdout
    with open(report) as fh:
        header = fh.readline().strip()
    assert header == "rho_bar_mixtures,rho_bar_separated,rho_bar_sources,ratio_1,ratio_2,K2"
    assert os.path.exists(os.path.join(tmp, "report.json"))


def test_repro_prints_reference_table(tmp):
    proc = run("repro", "--case", "2", "--seed", "5", "--duration", "2.5",
               "--outdir", os.path.join(tmp, "r2"))
    assert "0.6240" in proc.stdout  # published mixture correlation for this case
    assert "4.5899" in proc.stdout  # published closeness ratio
    assert "not" in proc.stdout and "reproducible" in proc.stdout


def test_determinism(tmp):
    a = os.path.join(tmp, "da")
    b = os.path.join(tmp, "db")
    c = os.path.join(tmp, "dc")
    run("repro", "--case", "3", "--seed", "7", "--duration", "2.5", "--outdir", a)
    run("repro", "--case", "3", "--seed", "7", "--duration", "2.5", "--outdir", b)
    # the thread count must not change any output byte
    env = dict(os.environ, UNMIX_THREADS="1")
    proc = subprocess.run(
        [CLI, "repro", "--case", "3", "--seed", "7", "--duration", "2.5", "--outdir", c],
        capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    for name in ("mixture.wav", "dynamic.wav", "batch.wav", "dynamic_report.csv"):
        assert filecmp.cmp(os.path.join(a, name), os.path.join(b, name), shallow=False), name
        assert filecmp.cmp(os.path.join(a, name), os.path.join(c, name), shallow=False), name


def test_error_paths(tmp):
    # mono input must be rejected with a clear message
    import struct, math
    mono = os.path.join(tmp, "mono.wav")
    frames = b"".join(struct.pack("<h", int(10000 * math.sin(0.05 * k))) for k in range(40000))
    with open(mono, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", 36 + len(frames)) + b"WAVE")
        fh.write(b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, 16000, 32000, 2, 16))
        fh.write(b"data" + struct.pack("<I", len(frames)) + frames)
    proc = run("separate", mono, os.path.join(tmp, "x1.wav"), os.path.join(tmp, "x2.wav"),
               expect_failure=True)
    assert "2 channels" in proc.stderr
    proc = run("separate", os.path.join(tmp, "missing.wav"), "a.wav", "b.wav",
               expect_failure=True)
    assert "error" in proc.stderr


def main():
    with tempfile.TemporaryDirectory() as tmp:
        for name, fn in sorted(globals().items()):
            if name.startswith("test_"):
                sub = os.path.join(tmp, name)
                os.makedirs(sub, exist_ok=True)
                fn(sub)
                print(f"ok {name}")
    print("cli checks passed")


if __name__ == "__main__":
    main()
