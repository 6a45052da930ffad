"""Console entry points: mudgated, mudgate-extract, mudbench, mudups."""

from __future__ import annotations

import argparse
import logging
import re
import sys
import threading
import time
from pathlib import Path

from . import bench, dhcp, manager as manager_mod, plotting, signature, statusapi, ups
from .errors import MalformedEvent, MudgateError
from .firewall import SimulatedFirewall

log = logging.getLogger(__name__)


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def parse_duration(text: str) -> float:
    """'200ms' -> 0.2, '5s'/'5' -> 5.0"""
    match = re.fullmatch(r"([0-9.]+)\s*(ms|s)?", text.strip())
    if not match:
        raise argparse.ArgumentTypeError(f"cannot parse duration {text!r}")
    value = float(match.group(1))
    return value / 1000.0 if match.group(2) == "ms" else value


def parse_pairs(text: str) -> list[tuple[int, int]]:
    """'1:1,2:2,2:4' -> [(1,1), (2,2), (2,4)]"""
    pairs = []
    for chunk in text.split(","):
        a, _, b = chunk.strip().partition(":")
        pairs.append((int(a), int(b)))
    return pairs


# --------------------------------------------------------------------------


def main_extract(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mudgate-extract",
        description="Extract MUD URLs from DHCP packets in a pcap capture "
                    "and emit one join-event line per packet.")
    parser.add_argument("pcap", help="classic pcap capture file, or - for stdin")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)

    data = sys.stdin.buffer.read() if args.pcap == "-" else Path(args.pcap).read_bytes()
    try:
        for join in dhcp.iter_pcap_joins(data):
            print(dhcp.format_join_event(join))
    except MudgateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


# --------------------------------------------------------------------------


def main_mudgated(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mudgated",
        description="MUD manager daemon: processes device joins, fetches and "
                    "verifies MUD/UPS files, installs firewall policy, and "
                    "serves a status API.")
    parser.add_argument("--config", required=True, help="manager config file")
    parser.add_argument("--events", help="join-event lines to replay (file or -)")
    parser.add_argument("--parallel", type=int, default=None,
                        help="overlapping fetch pipelines (default 1, sequential)")
    parser.add_argument("--once", action="store_true",
                        help="exit after replaying --events instead of serving")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)

    config = manager_mod.load_config(args.config)
    if args.parallel is not None:
        config.parallel = args.parallel
    anchors = signature.AnchorStore(config.anchors_dir)
    firewall = SimulatedFirewall(default_non_mud=config.default_legacy)
    mgr = manager_mod.MudManager(config, firewall, anchors)
    server = statusapi.build_status_server(mgr, config.listen_status_addr).start()
    log.info("status API listening on %s", server.address)

    stop = threading.Event()

    def refresh_loop():
        while not stop.wait(config.refresh_interval_s):
            try:
                mgr.refresh_expired()
                mgr.sync_ups_overlays()
            except Exception:
                log.exception("refresh sweep failed")

    threading.Thread(target=refresh_loop, daemon=True).start()

    status = 0
    if args.events:
        stream = sys.stdin if args.events == "-" else open(args.events, encoding="utf-8")
        with stream:
            workers = []
            for line in stream:
                line = line.strip()
                if not line:
                    continue
                try:
                    ev = dhcp.parse_join_event(line)
                except MalformedEvent as exc:
                    log.error("skipping event: %s", exc)
                    status = 1
                    continue
                if config.parallel > 1:
                    t = threading.Thread(target=mgr.handle_device_join, args=(ev,))
                    t.start()
                    workers.append(t)
                else:
                    mgr.handle_device_join(ev)
            for t in workers:
                t.join()
    if not args.once:
        try:
            while True:
                time.sleep(3600)
        except KeyboardInterrupt:
            pass
    stop.set()
    server.stop()
    return status


# --------------------------------------------------------------------------


def main_mudbench(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mudbench",
        description="Boot-storm latency benchmark: replays (a,b) join grids "
                    "through the manager against a delayed stub MFS and a "
                    "local UPS, writing per-device CSV and a figure.")
    parser.add_argument("--pairs", type=parse_pairs,
                        default=bench.PAPER_PAIRS,
                        help="a:b pairs, e.g. 1:1,2:2,2:4,3:8,6:16")
    parser.add_argument("--reps", type=int, default=20)
    parser.add_argument("--remote-rtt", type=parse_duration, default="200ms",
                        help="injected MFS round-trip delay (e.g. 200ms)")
    parser.add_argument("--local-rtt", type=parse_duration, default="5ms",
                        help="injected UPS delay (e.g. 5ms)")
    parser.add_argument("--file-size", default="2048:6144",
                        help="MUD file size range in bytes, lo:hi")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--out", default="report.csv", help="CSV output path")
    parser.add_argument("--plot", default=None,
                        help="figure output path (default: CSV path with .png)")
    parser.add_argument("--no-baseline", action="store_true",
                        help="skip the matched a=0 baseline run")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)

    lo, _, hi = args.file_size.partition(":")
    cfg = bench.BenchmarkConfig(
        pairs=args.pairs, repetitions=args.reps,
        remote_rtt_s=args.remote_rtt if isinstance(args.remote_rtt, float)
        else parse_duration(args.remote_rtt),
        local_rtt_s=args.local_rtt if isinstance(args.local_rtt, float)
        else parse_duration(args.local_rtt),
        file_size_bytes=(int(lo), int(hi or lo)), seed=args.seed)

    log.info("running UPS-enabled grid %s x %d reps", cfg.pairs, cfg.repetitions)
    report = bench.run_boot_storm(cfg)
    reports = {"with UPS": report}
    csv_text = bench.emit_csv(report)
    if not args.no_baseline:
        log.info("running matched a=0 baseline")
        baseline = bench.run_boot_storm(cfg.baseline())
        reports["baseline (no UPS)"] = baseline
        csv_text += "".join(line + "\n" for line in
                            bench.emit_csv(baseline).splitlines()[1:])

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(csv_text, encoding="utf-8")
    plot_path = Path(args.plot) if args.plot else out.with_suffix(".png")
    plotting.plot_rule_setting_time(reports, plot_path)
    print(f"wrote {out} and {plot_path}")

    for row in report.aggregates():
        print(f"pair ({row['pair_a']},{row['pair_b']}): "
              f"mean {row['mean_s']:.3f}s min {row['min_s']:.3f}s "
              f"max {row['max_s']:.3f}s")
    if not args.no_baseline:
        for pair, base_pair in zip(cfg.pairs, cfg.baseline().pairs):
            measured = report.mean_total(pair) - baseline.mean_total(base_pair)
            modeled = report.modeled_ups_overhead(pair)
            print(f"pair {pair}: UPS overhead measured {measured * 1000:.1f}ms, "
                  f"modeled {modeled * 1000:.1f}ms")
    return 0


# --------------------------------------------------------------------------


def main_mudups(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mudups",
        description="User Policy Server: serves signed per-device policy "
                    "files and the admin console.")
    parser.add_argument("--config", required=True, help="UPS config file")
    parser.add_argument("--init", action="store_true",
                        help="create the signing key/cert if missing, then exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)

    config = ups.load_ups_config(args.config)
    key_path = Path(config.signing_key)
    cert_path = Path(config.signing_cert)
    if args.init:
        if key_path.exists() or cert_path.exists():
            print(f"refusing to overwrite {key_path} / {cert_path}", file=sys.stderr)
            return 1
        key, cert = signature.make_self_signed("user-policy-server")
        key_path.parent.mkdir(parents=True, exist_ok=True)
        signature.save_private_key(key, key_path)
        signature.save_certificate(cert, cert_path)
        print(f"wrote {key_path} and {cert_path}; add the certificate to the "
              f"manager's anchor store with role 'ups'")
        return 0

    store = ups.UpsStore(config.store_dir,
                         signature.load_private_key(key_path),
                         signature.load_certificate(cert_path))
    server = ups.UpsServer(store, admin_token=config.admin_token,
                           listen_addr=config.listen_addr,
                           manager_status_url=config.manager_status_url,
                           ui_dir=config.ui_dir,
                           merge_mode=config.merge_mode).start()
    log.info("UPS listening on %s", server.base_url)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    server.stop()
    return 0
