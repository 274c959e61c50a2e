"""Operator command line: corpus generation, model training, evaluation,
offline detection, trace replay, and the live monitor service.

Every subcommand prints its resolved configuration before doing work and is
reproducible under a fixed seed.  Error families map to distinct exit codes
(see errors.py).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipelines
from .activity import ActivityClassifier
from .auth import FEATURES_AUDIO, FEATURES_COMBINED, FEATURES_MOTION
from .errors import ActimonError, InputError
from .models import TrainConfig, load_model, save_model
from .service import (
    DeviceConfigEntry,
    MonitorService,
    PipelineConfig,
    PipelineModels,
    run_offline,
)
from .signals import canonical_json, read_audio, read_trace
from .synth import RECIPES, gen_corpus


def _print_resolved(args: argparse.Namespace) -> None:
    resolved = {k: str(v) if isinstance(v, Path) else v for k, v in vars(args).items()}
    resolved.pop("func", None)
    print("config: " + json.dumps(resolved, sort_keys=True))


def _write_report(report: dict, path: str | None) -> None:
    text = json.dumps(report, indent=1, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n")
        print(f"report written to {path}")
    else:
        print(text)


def _write_plot_data(rows: list, header: str, path: str | None) -> None:
    if not path:
        return
    lines = [header]
    for row in rows:
        lines.append(" ".join(str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
    print(f"plot data written to {path}")


def _load_pipeline_config(path: str | None) -> PipelineConfig:
    if not path:
        return PipelineConfig()
    p = Path(path)
    if not p.exists():
        raise InputError(f"config file not found: {p}")
    return PipelineConfig.from_dict(json.loads(p.read_text()))


# -- subcommands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    kwargs = {}
    if args.recipe == "auth" and args.auth_session_s:
        kwargs["session_s"] = args.auth_session_s
    manifest = gen_corpus(args.recipe, args.out, seed=args.seed, scale=args.scale, **kwargs)
    print(f"wrote {len(manifest['entries'])} entries to {args.out}")
    return 0


def cmd_train_activity(args) -> int:
    cfg = TrainConfig(seed=args.seed, k=args.k)
    classifier = pipelines.train_activity_from_corpus(args.corpus, cfg)
    classifier.save(args.out)
    print(f"activity classifier written to {args.out}")
    return 0


def cmd_train_shock(args) -> int:
    cfg = TrainConfig(seed=args.seed)
    model = pipelines.train_shock_from_corpus(args.corpus, cfg)
    save_model(model, args.out)
    print(f"shock model written to {args.out} (final loss {model.final_loss:.4f})")
    return 0


def cmd_enroll(args) -> int:
    cfg = TrainConfig(seed=args.seed)
    sessions = pipelines.load_auth_dataset(args.corpus)
    result = pipelines.eval_auth_sessions(sessions, args.features, cfg, iterations=args.iterations)
    save_model(result["model"], args.out)
    print(
        f"identifier written to {args.out} "
        f"(held-out window accuracy {result['window_accuracy']:.3f})"
    )
    return 0


def cmd_eval(args) -> int:
    if args.kind == "activity":
        classifier = ActivityClassifier.load(args.model)
        report = pipelines.eval_activity_corpus(args.corpus, classifier)
        _write_report(report, args.report)
        test = pipelines.load_activity_instances(args.corpus, "test")
        rows = [
            (i, inst.label.value, *(f"{v:.6f}" for v in inst.feature.values))
            for i, inst in enumerate(test)
        ]
        _write_plot_data(rows, "# idx label mean_abs_accel mean_abs_jerk", args.plot_data)
        print(f"accuracy {report['accuracy']:.3f}")
    elif args.kind == "events":
        model = load_model(args.model)
        report = pipelines.eval_events_corpus(args.corpus, model, _load_pipeline_config(args.config))
        episodes = report.pop("episodes")
        _write_report(report, args.report)
        rows = [
            (e["id"], e["kind"], e["three_step_alarms"], e["impact_only_alarms"])
            for e in episodes
        ]
        _write_plot_data(rows, "# id kind three_step_alarms impact_only_alarms", args.plot_data)
        print(
            "three-step TA/FA "
            f"{report['three_step']['true_alarms']}/{report['three_step']['false_alarms']}  "
            "impact-only TA/FA "
            f"{report['impact_only']['true_alarms']}/{report['impact_only']['false_alarms']}"
        )
    else:  # auth
        sessions = pipelines.load_auth_dataset(args.corpus)
        cfg = TrainConfig(seed=args.seed)
        report = pipelines.eval_auth_sessions(sessions, args.features, cfg, iterations=args.iterations)
        report.pop("model")
        rows = [(f"{t:.1f}", true, pred, f"{score:.4f}") for t, true, pred, score in report.pop("windows")]
        _write_report(report, args.report)
        _write_plot_data(rows, "# t true predicted score", args.plot_data)
        print(
            f"window accuracy {report['window_accuracy']:.3f}, "
            f"voted accuracy {report['voted_accuracy']:.3f}"
        )
    return 0


def _load_models(args) -> PipelineModels:
    classifier = ActivityClassifier.load(args.activity_model) if args.activity_model else None
    shock = load_model(args.shock_model) if args.shock_model else None
    identifier = load_model(args.auth_model) if args.auth_model else None
    return PipelineModels(classifier=classifier, shock=shock, identifier=identifier)


def cmd_detect(args) -> int:
    stream = read_trace(args.trace)
    frames = read_audio(args.audio) if args.audio else []
    models = _load_models(args)
    cfg = _load_pipeline_config(args.config)
    pipeline = run_offline(stream, frames, models, cfg, privacy=args.privacy)
    out = Path(args.out_dir) / stream.device_id
    out.mkdir(parents=True, exist_ok=True)
    with (out / "history.jsonl").open("w") as fh:
        for rec in pipeline.history:
            fh.write(canonical_json(rec.to_record()) + "\n")
    with (out / "alerts.jsonl").open("w") as fh:
        for alert in pipeline.alerts:
            fh.write(canonical_json(alert.to_record()) + "\n")
    print(
        f"{len(pipeline.history)} history records, {len(pipeline.alerts)} alerts "
        f"written under {out}"
    )
    return 0


def cmd_replay(args) -> int:
    from .server import replay_trace

    stream = read_trace(args.trace)
    frames = read_audio(args.audio) if args.audio else []
    accepted = replay_trace(
        args.host, args.port, stream, frames, token=args.token, device_id=args.device
    )
    print(f"replayed {accepted} records to {args.host}:{args.port}")
    return 0


def cmd_serve(args) -> int:
    from .server import MonitorServer

    devices = {}
    if args.devices:
        path = Path(args.devices)
        if not path.exists():
            raise InputError(f"devices file not found: {path}")
        for device_id, entry in json.loads(path.read_text()).items():
            devices[device_id] = DeviceConfigEntry(
                token=entry.get("token", ""),
                privacy=entry.get("privacy", "full"),
                owner=entry.get("owner", ""),
            )
    service = MonitorService(
        args.data_dir,
        devices=devices,
        models=_load_models(args),
        cfg=_load_pipeline_config(args.config),
    )
    static_dir = Path(args.static_dir) if args.static_dir else None
    server = MonitorServer(
        service,
        http_port=args.http_port,
        ingest_port=args.ingest_port,
        host=args.host,
        static_dir=static_dir,
    )
    print(f"http on {args.host}:{server.http_port}, ingest on {args.host}:{server.ingest_port}")
    server.serve_forever()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="actimon",
        description="Accelerometer activity monitoring: synth, train, eval, detect, serve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    p.add_argument("--recipe", choices=RECIPES, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0,
                   help="shrink default entry counts (events/auth corpora are large)")
    p.add_argument("--auth-session-s", type=float, default=None,
                   help="override session length for the auth recipe")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-activity", help="fit per-class mixture models")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=2)
    p.set_defaults(func=cmd_train_activity)

    p = sub.add_parser("train-shock", help="train the impact classifier")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_shock)

    p = sub.add_parser("enroll", help="train the user identifier")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--features", choices=(FEATURES_COMBINED, FEATURES_MOTION, FEATURES_AUDIO),
                   default=FEATURES_COMBINED)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iterations", type=int, default=None)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("eval", help="evaluate a model on a corpus")
    p.add_argument("--kind", choices=("activity", "events", "auth"), required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", help="model file (activity/events)")
    p.add_argument("--features", choices=(FEATURES_COMBINED, FEATURES_MOTION, FEATURES_AUDIO),
                   default=FEATURES_COMBINED)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--plot-data", help="write columnar plot data here")
    p.add_argument("--config", help="pipeline config JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("detect", help="offline batch detection over one trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--audio")
    p.add_argument("--activity-model")
    p.add_argument("--shock-model")
    p.add_argument("--auth-model")
    p.add_argument("--privacy", choices=("full", "coarse"), default="full")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("replay", help="stream a recorded trace to a live server")
    p.add_argument("--trace", required=True)
    p.add_argument("--audio")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--token", default="")
    p.add_argument("--device", help="override the trace's device id")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="run the monitor service")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--http-port", type=int, default=8321)
    p.add_argument("--ingest-port", type=int, default=8322)
    p.add_argument("--devices", help="JSON file: device_id -> {token, privacy, owner}")
    p.add_argument("--activity-model")
    p.add_argument("--shock-model")
    p.add_argument("--auth-model")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--static-dir", help="serve the dashboard bundle from here")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _print_resolved(args)
    try:
        return args.func(args)
    except ActimonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
