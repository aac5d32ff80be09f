"""Command-line entry point: ``hvhash <subcommand>``.

Exit codes: 0 success, 1 usage error, 2 input or parse error, 3 internal
invariant violation.
"""
from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from . import bench, encrypted, paillier, videohash
from .config import Config, ConfigError, build_config
from .encrypted import TransferFormatError, TrustedZone
from .matcher import MatchError, compare, similarity
from .media import MediaError, load_frame_directory, parse_y4m, read_y4m
from .videohash import HashFormatError, HashIndex

EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 1, 2, 3
INPUT_ERRORS = (MediaError, HashFormatError, videohash.DuplicateEntryError, TransferFormatError, paillier.PaillierError, MatchError,
                ConfigError, OSError, json.JSONDecodeError, KeyError)


class UsageError(Exception):
    pass


class InvariantViolation(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(args, payload: dict, human: str) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(human)


def _config(args) -> Config:
    overrides = {k: getattr(args, k, None) for k in Config.__dataclass_fields__}
    return build_config(args.config, overrides)


def _rng(cfg: Config):
    # reproducible randomness only when a seed is given explicitly
    return random.Random(cfg.seed) if cfg.seed else None


def _load_video(src: str, frame_rate: float):
    if src == "-":
        return parse_y4m(sys.stdin.buffer.read(), source_id="stdin")
    path = Path(src)
    if path.is_dir():
        return load_frame_directory(path, frame_rate)
    return read_y4m(path)


def _check_hash(h: videohash.VideoHash) -> None:
    if not h.frame_count_identity():
        raise InvariantViolation("frame-count identity failed for built hash")


def _hash_summary(h: videohash.VideoHash) -> dict:
    hd = h.header
    return {"source_id": hd.source_id, "total_frames": hd.total_frames, "frame_rate": hd.frame_rate,
            "blank_count": hd.blank_count, "trailing_drops": hd.trailing_drops,
            "keyframe_percentage": hd.keyframe_percentage, "resolution": hd.resolution,
            "block_grid": hd.block_grid, "format_version": hd.format_version, "keyframes": len(h.records)}


# -- subcommands ---------------------------------------------------------------

def cmd_keygen(args, cfg):
    pk, sk = paillier.generate_keypair(args.bits, rng_seed=cfg.seed or None)
    pub, priv = paillier.save_keypair(pk, sk, args.out)
    _emit(args, {"key_bits": pk.key_bits, "public_key": str(pub), "private_key": str(priv),
                 "fingerprint": pk.fingerprint().hex()},
          f"wrote {pub} and {priv} ({pk.key_bits}-bit modulus, fingerprint {pk.fingerprint().hex()})")


def cmd_hash(args, cfg):
    stream = _load_video(args.input, args.frame_rate)
    h = videohash.build_video_hash(stream, cfg.selection_params())
    _check_hash(h)
    if args.out:
        videohash.save(h, args.out)
    payload = _hash_summary(h) | {"out": args.out}
    _emit(args, payload, f"{h.source_id}: {len(h.records)} keyframes from {h.header.total_frames} frames"
          + (f" -> {args.out}" if args.out else ""))


def _require(path, what):
    if not path:
        raise UsageError(f"{what} is required (flag or config key)")
    return path


def cmd_tz_prepare(args, cfg):
    sk = paillier.load_private_key(_require(cfg.private_key, "--private-key"))
    tz = TrustedZone(sk, cfg.selection_params(), rng=_rng(cfg))
    msg = tz.prepare(_load_video(args.input, args.frame_rate))
    encrypted.save_bundle(msg, tz.public_key, args.out)
    _emit(args, {"stage": "tz-prepare", "frames": len(msg.frames), "out": args.out,
                 "fingerprint": msg.key_fingerprint.hex()},
          f"encrypted {len(msg.frames)} keyframes -> {args.out}")


def cmd_server_aggregate(args, cfg):
    pk = paillier.load_public_key(_require(cfg.public_key, "--public-key"))
    msg = encrypted.read_bundle(Path(args.input).read_bytes())
    out = encrypted.server_process(msg, pk, _rng(cfg))
    encrypted.save_components(out, pk, args.out)
    _emit(args, {"stage": "server-aggregate", "frames": len(out.components), "out": args.out,
                 "fingerprint": out.key_fingerprint.hex()},
          f"aggregated {len(out.components)} frames -> {args.out}")


def cmd_tz_finalize(args, cfg):
    sk = paillier.load_private_key(_require(cfg.private_key, "--private-key"))
    tz = TrustedZone(sk, cfg.selection_params())
    h = tz.finalize(encrypted.read_components(Path(args.input).read_bytes()))
    _check_hash(h)
    videohash.save(h, args.out)
    _emit(args, {"stage": "tz-finalize", "frames": len(h.records), "out": args.out,
                 "fingerprint": tz.public_key.fingerprint().hex()},
          f"{h.source_id}: {len(h.records)} keyframes -> {args.out}")


def _match_payload(r) -> dict:
    return {"score": r.score, "similarity": similarity(r), "alignment": [list(p) for p in r.alignment],
            "self_score_a": r.self_score_a, "self_score_b": r.self_score_b}


def cmd_compare(args, cfg):
    a, b = videohash.load(args.hash_a), videohash.load(args.hash_b)
    r = compare(a, b, cfg.match_params())
    _emit(args, _match_payload(r),
          f"score {r.score}  similarity {similarity(r):.4f}  run length {len(r.alignment)}")


def cmd_index_add(args, cfg):
    idx = HashIndex.open(args.index)
    added = []
    for path in args.hashes:
        h = videohash.load(path)
        idx.add(h)
        added.append(h.source_id)
    _emit(args, {"index": args.index, "added": added, "entries": len(idx)},
          f"added {len(added)} hashes; index holds {len(idx)}")


def cmd_index_query(args, cfg):
    idx = HashIndex.open(args.index)
    hits = idx.query(videohash.load(args.query), args.threshold, cfg.match_params(), args.by)
    rows = [{"source_id": sid} | _match_payload(r) for sid, r in hits]
    _emit(args, {"index": args.index, "results": rows},
          "\n".join(f"{row['source_id']:<24} score {row['score']:>6}  similarity {row['similarity']:.4f}"
                    for row in rows) or "no matches")


def cmd_bench(args, cfg):
    corpus = bench.generate_corpus(args.videos, (args.min_duration, args.max_duration), args.fps, cfg.seed)
    ranges = bench.MILD_RANGES if args.mild else bench.FULL_RANGES
    result = bench.run_robustness_suite(corpus, args.variants, cfg.match_params(), cfg.selection_params(),
                                        seed=cfg.seed, ranges=ranges, sensitivity_fpr=args.fpr,
                                        identity=args.identity, threads=cfg.threads)
    paths = result.write(args.out) if args.out else []
    roc = result.roc
    payload = {"crossover_accuracy": roc.crossover_accuracy, "crossover_threshold": roc.crossover_threshold,
               "tpr_at_fpr": {format(k, "g"): v for k, v in roc.tpr_at_fpr.items()},
               "n_similar": roc.n_similar, "n_different": roc.n_different, "warnings": roc.warnings,
               "compression": result.compression, "files": [str(p) for p in paths]}
    lines = [f"similar pairs {roc.n_similar}, different pairs {roc.n_different}",
             f"crossover accuracy {roc.crossover_accuracy:.4f} at similarity {roc.crossover_threshold:.4f}"]
    lines += [f"TPR at FPR {k:g}: {'unsupported' if v is None else f'{v:.4f}'}" for k, v in roc.tpr_at_fpr.items()]
    lines += [f"note: {w}" for w in roc.warnings] + [f"({result.compression})"]
    _emit(args, payload, "\n".join(lines))


def _inspect(path: Path) -> dict:
    data = path.read_bytes()
    magic = data[:4]
    if magic == videohash.MAGIC:
        h = videohash.deserialize(data)
        return {"kind": "video-hash", **_hash_summary(h),
                "records": [{"hash": format(r.hash.value, "016x"), "dropped_before": r.dropped_before,
                             "source_index": r.source_index} for r in h.records]}
    if magic == videohash.INDEX_MAGIC:
        idx = HashIndex.open(path)
        return {"kind": "index", "entries": sorted(idx.entries)}
    if magic == encrypted.BUNDLE_MAGIC:
        m = encrypted.read_bundle(data)
        return {"kind": "encrypted-frames", "frames": len(m.frames), "fingerprint": m.key_fingerprint.hex(),
                "source_id": m.meta.source_id}
    if magic == encrypted.COMPONENTS_MAGIC:
        m = encrypted.read_components(data)
        return {"kind": "hash-components", "frames": len(m.components), "fingerprint": m.key_fingerprint.hex(),
                "source_id": m.meta.source_id}
    doc = json.loads(data)
    if doc.get("format") == "hvhash-paillier-public":
        pk = paillier.public_key_from_dict(doc)
        return {"kind": "public-key", "key_bits": pk.key_bits, "fingerprint": pk.fingerprint().hex()}
    if doc.get("format") == "hvhash-paillier-private":
        sk = paillier.private_key_from_dict(doc)
        return {"kind": "private-key", "key_bits": sk.n.bit_length(),
                "fingerprint": sk.public_key.fingerprint().hex()}
    raise HashFormatError(f"{path}: unrecognised file")


def cmd_inspect(args, cfg):
    info = _inspect(Path(args.file))
    human = "\n".join(f"{k}: {v}" for k, v in info.items() if k != "records")
    if "records" in info:
        human += "\n" + "\n".join(f"  {r['source_index']:>6}  {r['hash']}  dropped {r['dropped_before']}"
                                  for r in info["records"])
    _emit(args, info, human)


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--config", help="key=value configuration file")
    g.add_argument("--json", action="store_true", help="machine-readable output")
    g.add_argument("--seed", type=int, help="seed for reproducible randomness (0 = system entropy)")
    g.add_argument("--threads", type=int)
    g.add_argument("--print-config", action="store_true", help="print the effective configuration and exit")
    sel = argparse.ArgumentParser(add_help=False)
    g = sel.add_argument_group("hashing")
    g.add_argument("--blank-std", dest="blank_std", type=float)
    g.add_argument("--keyframe-threshold", dest="keyframe_threshold", type=int)
    g.add_argument("--resolution", type=int)
    g.add_argument("--block-grid", dest="block_grid", type=int)
    g.add_argument("--frame-rate", dest="frame_rate", type=float, default=30.0,
                   help="frame rate for PGM frame directories")
    match = argparse.ArgumentParser(add_help=False)
    g = match.add_argument_group("matching")
    g.add_argument("--hash-threshold", dest="hash_threshold", type=int)
    g.add_argument("--drop-threshold", dest="drop_threshold", type=int)
    g.add_argument("--drop-rounding", dest="drop_rounding", choices=["half_up", "floor"])

    parser = _Parser(prog="hvhash", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("keygen", parents=[common], help="generate a Paillier key pair")
    p.add_argument("--bits", type=int, default=paillier.DEFAULT_KEY_BITS)
    p.add_argument("--out", required=True, help="directory for public.key and private.key")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("hash", parents=[common, sel], help="hash a Y4M file, stdin (-) or PGM directory")
    p.add_argument("input")
    p.add_argument("--out")
    p.set_defaults(func=cmd_hash)

    enc = sub.add_parser("hash-enc", help="encrypted hashing in three stages")
    stages = enc.add_subparsers(dest="stage", required=True, parser_class=_Parser)
    p = stages.add_parser("tz-prepare", parents=[common, sel], help="trusted zone: select and encrypt")
    p.add_argument("input")
    p.add_argument("--private-key", dest="private_key")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tz_prepare)
    p = stages.add_parser("server-aggregate", parents=[common], help="server: homomorphic block components")
    p.add_argument("input")
    p.add_argument("--public-key", dest="public_key")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_server_aggregate)
    p = stages.add_parser("tz-finalize", parents=[common, sel], help="trusted zone: decrypt signs into a hash")
    p.add_argument("input")
    p.add_argument("--private-key", dest="private_key")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tz_finalize)

    p = sub.add_parser("compare", parents=[common, match], help="compare two hash files")
    p.add_argument("hash_a")
    p.add_argument("hash_b")
    p.set_defaults(func=cmd_compare)

    idx = sub.add_parser("index", help="hash index operations")
    ops = idx.add_subparsers(dest="op", required=True, parser_class=_Parser)
    p = ops.add_parser("add", parents=[common])
    p.add_argument("index")
    p.add_argument("hashes", nargs="+")
    p.set_defaults(func=cmd_index_add)
    p = ops.add_parser("query", parents=[common, match])
    p.add_argument("index")
    p.add_argument("query")
    p.add_argument("--threshold", type=float, default=1)
    p.add_argument("--by", choices=["score", "similarity"], default="score")
    p.set_defaults(func=cmd_index_query)

    p = sub.add_parser("bench", parents=[common, sel, match], help="robustness suite on a synthetic corpus")
    p.add_argument("--videos", type=int, default=200)
    p.add_argument("--variants", type=int, default=25)
    p.add_argument("--min-duration", dest="min_duration", type=float, default=2.0)
    p.add_argument("--max-duration", dest="max_duration", type=float, default=6.0)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--fpr", type=float, default=1e-3, help="false positive rate for sensitivity panels")
    p.add_argument("--mild", action="store_true", help="restrict distortions to the mild ranges")
    p.add_argument("--identity", action="store_true", help="use undistorted variants")
    p.add_argument("--out", help="directory for report.json and sensitivity CSVs")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", parents=[common], help="describe a hash, index, key or transfer file")
    p.add_argument("file")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    try:
        cfg = _config(args)
        if args.print_config:
            _emit(args, cfg.to_dict(), "\n".join(f"{k} = {v}" for k, v in cfg.to_dict().items()))
            return 0
        args.func(args, cfg)
    except UsageError as exc:
        print(f"hvhash: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"hvhash: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantViolation as exc:
        print(f"hvhash: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except INPUT_ERRORS as exc:
        print(f"hvhash: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
