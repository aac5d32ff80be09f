import json
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from hvhash import cli
from hvhash.bench import generate_corpus
from hvhash.media import write_y4m


def _schema(name):
    return json.loads(resources.files("hvhash").joinpath("schemas", f"{name}.json").read_text())


def run(capsys, *argv, schema=None):
    capsys.readouterr()
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    payload = None
    if "--json" in argv and code == 0:
        payload = json.loads(out.out)
        if schema:
            jsonschema.validate(payload, _schema(schema))
    return code, payload, out


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    videos = generate_corpus(2, (2, 2), seed=31)
    for i, v in enumerate(videos):
        (root / f"v{i}.y4m").write_bytes(write_y4m(v))
    return root


@pytest.fixture(scope="module")
def keydir(workspace):
    assert cli.main(["keygen", "--bits", "256", "--seed", "5", "--out", str(workspace / "keys")]) == 0
    return workspace / "keys"


def test_keygen(capsys, tmp_path):
    code, payload, _ = run(capsys, "keygen", "--bits", "256", "--seed", "3", "--out", tmp_path / "k", "--json",
                           schema="keygen")
    assert code == 0 and payload["key_bits"] == 256
    assert sorted(p.name for p in (tmp_path / "k").iterdir()) == ["private.key", "public.key"]


def test_hash_and_self_compare(capsys, workspace):
    out = workspace / "v0.hvh"
    code, payload, _ = run(capsys, "hash", workspace / "v0.y4m", "--out", out, "--json", schema="hash")
    assert code == 0 and out.exists()
    code, payload, _ = run(capsys, "compare", out, out, "--json", schema="compare")
    assert code == 0 and payload["similarity"] == 1.0


def test_compare_different_videos(capsys, workspace):
    for i in (0, 1):
        cli.main(["hash", str(workspace / f"v{i}.y4m"), "--out", str(workspace / f"v{i}.hvh")])
    code, payload, _ = run(capsys, "compare", workspace / "v0.hvh", workspace / "v1.hvh", "--json",
                           schema="compare")
    assert code == 0 and payload["similarity"] < 0.5
    code, _, out = run(capsys, "compare", workspace / "v0.hvh", workspace / "v1.hvh")
    assert code == 0 and "similarity" in out.out


def test_hash_is_idempotent(capsys, workspace, tmp_path):
    cli.main(["hash", str(workspace / "v0.y4m"), "--out", str(tmp_path / "a.hvh")])
    cli.main(["hash", str(workspace / "v0.y4m"), "--out", str(tmp_path / "b.hvh")])
    assert (tmp_path / "a.hvh").read_bytes() == (tmp_path / "b.hvh").read_bytes()


def test_hash_enc_three_processes_match_plaintext(workspace, keydir, tmp_path):
    """Each stage runs in its own interpreter, exchanging only files."""
    def stage(*argv):
        proc = subprocess.run([sys.executable, "-m", "hvhash.cli", *map(str, argv)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        return json.loads(proc.stdout)

    video = workspace / "v0.y4m"
    p = stage("hash-enc", "tz-prepare", video, "--private-key", keydir / "private.key", "--out",
              tmp_path / "b.hve", "--json")
    s = stage("hash-enc", "server-aggregate", tmp_path / "b.hve", "--public-key", keydir / "public.key",
              "--out", tmp_path / "c.hvc", "--json")
    f = stage("hash-enc", "tz-finalize", tmp_path / "c.hvc", "--private-key", keydir / "private.key",
              "--out", tmp_path / "enc.hvh", "--json")
    for payload in (p, s, f):
        jsonschema.validate(payload, _schema("hash_enc"))
    assert cli.main(["hash", str(video), "--out", str(tmp_path / "plain.hvh")]) == 0
    assert (tmp_path / "enc.hvh").read_bytes() == (tmp_path / "plain.hvh").read_bytes()


def test_server_rejects_wrong_key(capsys, workspace, keydir, tmp_path):
    cli.main(["hash-enc", "tz-prepare", str(workspace / "v1.y4m"), "--private-key", str(keydir / "private.key"),
              "--out", str(tmp_path / "b.hve")])
    cli.main(["keygen", "--bits", "256", "--out", str(tmp_path / "other")])
    capsys.readouterr()
    code, _, out = run(capsys, "hash-enc", "server-aggregate", tmp_path / "b.hve", "--public-key",
                       tmp_path / "other" / "public.key", "--out", tmp_path / "c.hvc")
    assert code == 2 and "key" in out.err.lower()


def test_hash_from_stdin(workspace):
    data = (workspace / "v0.y4m").read_bytes()
    proc = subprocess.run([sys.executable, "-m", "hvhash.cli", "hash", "-", "--json"], input=data,
                          capture_output=True)
    assert proc.returncode == 0
    jsonschema.validate(json.loads(proc.stdout), _schema("hash"))


def test_index_add_and_query(capsys, workspace, tmp_path):
    for i in (0, 1):
        cli.main(["hash", str(workspace / f"v{i}.y4m"), "--out", str(workspace / f"v{i}.hvh")])
    idx = tmp_path / "db.hvx"
    code, payload, _ = run(capsys, "index", "add", idx, workspace / "v0.hvh", workspace / "v1.hvh", "--json",
                           schema="index_add")
    assert code == 0 and payload["entries"] == 2
    code, payload, _ = run(capsys, "index", "query", idx, workspace / "v1.hvh", "--by", "similarity",
                           "--threshold", "0.9", "--json", schema="index_query")
    assert code == 0 and [r["source_id"] for r in payload["results"]] == ["v1"]
    code, _, out = run(capsys, "index", "add", idx, workspace / "v0.hvh")
    assert code == 2 and "duplicate" in out.err.lower()


def test_inspect(capsys, workspace, keydir):
    cli.main(["hash", str(workspace / "v0.y4m"), "--out", str(workspace / "v0.hvh")])
    for target in (workspace / "v0.hvh", keydir / "public.key", keydir / "private.key"):
        code, payload, _ = run(capsys, "inspect", target, "--json", schema="inspect")
        assert code == 0
    assert "lambda" not in json.dumps(payload).lower() or payload.get("kind") == "private-key"


def test_bench_small(capsys, tmp_path):
    code, payload, _ = run(capsys, "bench", "--videos", "4", "--variants", "1", "--min-duration", "2",
                           "--max-duration", "2", "--mild", "--fpr", "0.2", "--seed", "4", "--out", tmp_path,
                           "--json", schema="bench")
    assert code == 0 and (tmp_path / "report.json").exists()
    assert payload["n_similar"] == 4 and payload["n_different"] == 6


def test_print_config_layers(capsys, tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# layered\nhash_threshold = 4\nblank-std = 3.5\ndrop_threshold=7\n")
    code, payload, _ = run(capsys, "compare", "x", "y", "--config", conf, "--drop-threshold", "2",
                           "--print-config", "--json", schema="config")
    assert code == 0
    assert payload["hash_threshold"] == 4 and payload["blank_std"] == 3.5 and payload["drop_threshold"] == 2
    assert payload["resolution"] == 64 and payload["block_grid"] == 8


def test_print_config_human(capsys):
    code, _, out = run(capsys, "hash", "x", "--print-config")
    assert code == 0 and "keyframe_threshold = 16" in out.out


@pytest.mark.parametrize("argv", [
    ["hash", "x", "--resolution", "60", "--print-config"],
    ["hash", "x", "--block-grid", "0"],
    ["compare", "a"],
    ["frobnicate"],
    [],
    ["keygen", "--bits", "abc", "--out", "k"],
])
def test_usage_errors_exit_1(capsys, argv):
    assert cli.main(argv) == 1


def test_bad_config_file_exit_1(capsys, tmp_path):
    conf = tmp_path / "bad.conf"
    conf.write_text("no_such_key = 1\n")
    assert cli.main(["hash", "x", "--config", str(conf)]) == 1
    conf.write_text("resolution = big\n")
    assert cli.main(["hash", "x", "--config", str(conf)]) == 1


@pytest.mark.parametrize("make", ["missing", "garbage_y4m", "garbage_hvh"])
def test_input_errors_exit_2(capsys, tmp_path, make):
    if make == "missing":
        argv = ["hash", str(tmp_path / "nope.y4m")]
    elif make == "garbage_y4m":
        (tmp_path / "g.y4m").write_bytes(b"YUV4MPEG2 W10 H10 F30:1 C420\nFRAME\nxx")
        argv = ["hash", str(tmp_path / "g.y4m")]
    else:
        (tmp_path / "g.hvh").write_bytes(b"HVH1garbage")
        argv = ["compare", str(tmp_path / "g.hvh"), str(tmp_path / "g.hvh")]
    assert cli.main(argv) == 2
    assert capsys.readouterr().err.startswith("hvhash")


def test_invariant_violation_exit_3(capsys, monkeypatch, workspace):
    from hvhash import videohash
    real = videohash.build_video_hash

    def broken(*a, **k):
        h = real(*a, **k)
        object.__setattr__(h.header, "trailing_drops", h.header.trailing_drops + 1)
        return h
    monkeypatch.setattr(cli.videohash, "build_video_hash", broken)
    assert cli.main(["hash", str(workspace / "v0.y4m")]) == 3
