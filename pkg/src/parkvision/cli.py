"""Command line surface: corpus generation, vision pipeline runs, the
evaluation harness, the HTTP service and scripted simulations."""

from __future__ import annotations

import argparse
import json
import sys
import time
import urllib.error
import urllib.request
from pathlib import Path

from . import anpr, ocr, synth
from .config import load_config
from .imaging import read_image
from .store import CorruptLog, Gateway


class CliError(Exception):
    pass


def _cmd_gen_corpus(args) -> int:
    manifest = synth.generate_corpus(args.seed, args.count, args.tier, args.out)
    print(f"wrote {args.count} scenes, manifest at {manifest}")
    return 0


def _cmd_detect(args) -> int:
    img = read_image(args.image)
    for det in anpr.localize_plates(img):
        print(json.dumps({"bbox": list(det.bbox), "score": round(det.score, 4)}))
    return 0


def _print_reading(reading: ocr.PlateReading) -> None:
    print(f"time: {reading.elapsed_seconds}")
    print(reading.text)


def _cmd_ocr(args) -> int:
    img = read_image(args.image)
    det = anpr.Detection(bbox=(0, 0, img.width, img.height))
    t0 = time.perf_counter()
    plate = anpr.rectify_and_normalize(img, det)
    reading = ocr.recognize_plate(plate, ocr.build_atlas())
    elapsed = time.perf_counter() - t0
    print(f"time: {elapsed}")
    print(reading.text)
    return 0


def _cmd_pipeline(args) -> int:
    img = read_image(args.image)
    t0 = time.perf_counter()
    dets = anpr.localize_plates(img)
    if not dets:
        print("no plate found", file=sys.stderr)
        return 1
    plate = anpr.rectify_and_normalize(img, dets[0])
    reading = ocr.recognize_plate(plate, ocr.build_atlas())
    elapsed = time.perf_counter() - t0
    if args.verbose:
        print(json.dumps({"bbox": list(dets[0].bbox), "score": round(dets[0].score, 4),
                          "angle": round(plate.source_bbox.angle, 2)}))
    print(f"time: {elapsed}")
    print(reading.text)
    return 0


def _cmd_evaluate(args) -> int:
    manifest_path = Path(args.manifest)
    entries = synth.read_manifest(manifest_path)
    images_dir = Path(args.images) if args.images else manifest_path.parent

    recognizer = anpr.ClassicalRecognizer()
    report = anpr.evaluate_detector(recognizer, entries, images_dir)
    for record in report.summary():
        print(json.dumps(record))
    if args.report:
        report.write_jsonl(args.report)

    atlas = ocr.build_atlas()

    def read_text(img):
        try:
            dets = anpr.localize_plates(img)
            if not dets:
                return None
            plate = anpr.rectify_and_normalize(img, dets[0])
            return ocr.recognize_plate(plate, atlas).text
        except (anpr.AnprError, ocr.OcrError):
            return None

    counts = ocr.confusion_matrix(entries, images_dir, read_text)
    exact = 0
    for entry in entries:
        img = read_image(images_dir / entry.image_path)
        text = read_text(img)
        exact += text == entry.truth_text
    print(json.dumps({"summary": True, "ocr_exact_rate": round(exact / len(entries), 4),
                      "entries": len(entries)}))
    if args.confusion:
        ocr.write_confusion_csv(counts, args.confusion)
        print(f"confusion matrix at {args.confusion}")
    return 0


def _cmd_serve(args) -> int:
    from .server import BindFailure, make_server

    cfg = load_config(args.config)
    if args.port is not None:
        cfg.port = args.port
    if args.data is not None:
        cfg.data_dir = args.data
    try:
        gateway = Gateway(cfg.data_dir, cfg.schedule, fsync=cfg.fsync)
    except CorruptLog as exc:
        print(f"refusing to start: {exc}", file=sys.stderr)
        return 2
    try:
        httpd = make_server(gateway, cfg.host, cfg.port)
    except BindFailure as exc:
        print(f"refusing to start: {exc}", file=sys.stderr)
        return 2
    print(f"listening on http://{cfg.host}:{httpd.server_address[1]} data={cfg.data_dir}",
          flush=True)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.shutdown()
        gateway.close()
    return 0


def _post_json(url: str, body: dict) -> tuple[int, dict]:
    data = json.dumps(body).encode("utf-8")
    req = urllib.request.Request(url, data=data,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read().decode("utf-8"))


class _RemoteTarget:
    def __init__(self, base_url: str):
        self.base = base_url.rstrip("/")

    def register(self, body):
        return _post_json(f"{self.base}/v1/registrations", body)

    def topup(self, user_id, body):
        return _post_json(f"{self.base}/v1/users/{user_id}/wallet/topup", body)

    def event(self, body):
        return _post_json(f"{self.base}/v1/events", body)


class _EmbeddedTarget:
    def __init__(self, gateway: Gateway):
        self.gateway = gateway

    def register(self, body):
        return self.gateway.register(body, default_ts=time.time())

    def topup(self, user_id, body):
        return self.gateway.topup(user_id, body, default_ts=time.time())

    def event(self, body):
        return self.gateway.submit_event(body)


def _cmd_simulate(args) -> int:
    scenario = json.loads(Path(args.scenario).read_text(encoding="utf-8"))
    gateway = None
    if args.url:
        target = _RemoteTarget(args.url)
    else:
        cfg = load_config(args.config)
        data_dir = args.data or cfg.data_dir
        gateway = Gateway(data_dir, cfg.schedule, fsync=cfg.fsync)
        target = _EmbeddedTarget(gateway)

    counts = {"registrations": 0, "topups": 0, "events": 0, "rejected": 0}
    try:
        for body in scenario.get("registrations", []):
            status, resp = target.register(body)
            counts["registrations"] += 1
            if status >= 300:
                counts["rejected"] += 1
                print(f"registration {body.get('plate')}: {status} {resp}", file=sys.stderr)
        for body in scenario.get("topups", []):
            status, resp = target.topup(body["user_id"], body)
            counts["topups"] += 1
            if status >= 300:
                counts["rejected"] += 1
                print(f"topup {body.get('user_id')}: {status} {resp}", file=sys.stderr)
        for body in scenario.get("events", []):
            status, resp = target.event(body)
            counts["events"] += 1
            if status >= 300:
                counts["rejected"] += 1
                print(f"event {body.get('type')} {body.get('plate')}: {status} {resp}",
                      file=sys.stderr)
        if gateway is not None:
            with gateway.lock:
                counts["trips"] = len(gateway.service.trips)
                counts["notifications"] = len(gateway.service.notifications)
                counts["active_sessions"] = len(gateway.service.active_by_plate)
    finally:
        if gateway is not None:
            gateway.close()
    print(json.dumps(counts))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parkvision")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic scene corpus")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--tier", choices=sorted(synth.NOISE_PROFILES), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen_corpus)

    p = sub.add_parser("detect", help="print plate detections for one image")
    p.add_argument("image")
    p.set_defaults(fn=_cmd_detect)

    p = sub.add_parser("ocr", help="read a plate crop, print time then text")
    p.add_argument("image")
    p.set_defaults(fn=_cmd_ocr)

    p = sub.add_parser("pipeline", help="detect, rectify and read one scene")
    p.add_argument("image")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=_cmd_pipeline)

    p = sub.add_parser("evaluate", help="run detector + OCR over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images")
    p.add_argument("--report", help="write per-image detector records (JSONL)")
    p.add_argument("--confusion", help="write the 37-row confusion CSV")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("serve", help="run the HTTP gateway")
    p.add_argument("--port", type=int)
    p.add_argument("--data")
    p.add_argument("--config")
    p.set_defaults(fn=_cmd_serve)

    p = sub.add_parser("simulate", help="replay a scripted scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--data", help="embedded mode: gateway data dir")
    p.add_argument("--config")
    p.add_argument("--url", help="drive a running server instead")
    p.set_defaults(fn=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (OSError, ValueError, CliError, synth.SynthError,
            anpr.AnprError, ocr.OcrError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
