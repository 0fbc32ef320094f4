"""Command-line front end: ``oblivid encode|decode|run|bench|verify|synth``.

Configuration comes from a JSON file (``--config`` or ``$OBLIVID_CONFIG``),
then ``--set key=value`` pairs, then the dedicated flags of each subcommand.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import ENV_VAR, ConfigError, PipelineConfig, load_config


def _parse_sets(pairs: tuple[str, ...]) -> dict:
    out = {}
    for p in pairs:
        key, sep, raw = p.partition("=")
        if not sep or not key:
            raise click.BadParameter(f"expected KEY=VALUE, got {p!r}", param_hint="--set")
        try:
            out[key.strip().replace("-", "_")] = json.loads(raw)
        except json.JSONDecodeError:
            out[key.strip().replace("-", "_")] = raw
    return out


def _config(path, sets, **flags) -> PipelineConfig:
    try:
        return load_config(path, **{**_parse_sets(sets), **{k: v for k, v in flags.items() if v is not None}})
    except (ConfigError, TypeError) as exc:
        raise click.ClickException(f"config error: {exc}") from exc


def _resolution(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise click.BadParameter(f"expected WIDTHxHEIGHT, got {text!r}") from None
    return w, h


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text if text.endswith("\n") else text + "\n")
    else:
        click.echo(text.rstrip("\n"))


config_option = click.option("--config", "config_path", type=click.Path(dir_okay=False),
                             help=f"JSON config file (default: ${ENV_VAR}).")
set_option = click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
                          help="Override one config field; repeatable. VALUE is parsed as JSON.")


@click.group(context_settings={"help_option_names": ["--help"]})
@click.version_option(package_name="artifact", message="%(version)s")
def main():
    """Data-oblivious video analytics pipeline and its trace checker."""


@main.command()
@click.option("--input", "src", required=True, type=click.Path(exists=True),
              help="Frame directory or a single PGM/PNM/raw frame.")
@click.option("--output", required=True, type=click.Path(dir_okay=False), help="OVC file to write.")
@config_option
@set_option
@click.option("--quant", type=int)
@click.option("--bits-bound", type=int, help="Bits per padded unit; default fits the input.")
@click.option("--inter/--keyframe-only", "inter", default=None,
              help="Inter-code frames after the first.")
@click.option("--frame-level/--row-level", "frame_level", default=None,
              help="Pad whole frames instead of rows of blocks.")
def encode(src, output, config_path, sets, quant, bits_bound, inter, frame_level):
    """Encode grayscale frames into an OVC container."""
    from .codec.container import parse_header
    from .codec.encoder import encode_stream
    from .ingest import IngestError, ingest_frames

    cfg = _config(config_path, sets, quant=quant, bits_bound=bits_bound,
                  keyframe_only=None if inter is None else not inter, frame_level=frame_level)
    try:
        frames = ingest_frames(src)
        data = encode_stream(frames, cfg.quant, cfg.bits_bound, cfg.keyframe_only, cfg.radius,
                             cfg.frame_level, cfg.n_chunk)
    except (IngestError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    Path(output).write_bytes(data)
    h = parse_header(data)
    click.echo(json.dumps({"frames": h.frames, "width": h.width, "height": h.height,
                           "bits_bound": h.bits_bound, "n_chunk": h.n_chunk, "bytes": len(data)}))


@main.command()
@click.option("--input", "src", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output", type=click.Path(file_okay=False), help="Directory for decoded PGM frames.")
@click.option("--trace/--no-trace", default=False, help="Record the access trace and print its digest.")
@click.option("--line-bytes", type=int, default=64, show_default=True)
@click.option("--plain", is_flag=True, help="Use the non-oblivious reference decoder.")
def decode(src, output, trace, line_bytes, plain):
    """Decode an OVC container."""
    from .codec.container import DecodeError
    from .codec.decoder import decode_stream
    from .codec.reference import plain_decode_stream
    from .ingest import write_pgm
    from .trace import TraceRecorder

    data = Path(src).read_bytes()
    rec = TraceRecorder(line_bytes) if trace and not plain else None
    try:
        frames = plain_decode_stream(data) if plain else decode_stream(data, rec)
    except (DecodeError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    if output:
        out = Path(output)
        out.mkdir(parents=True, exist_ok=True)
        for i, f in enumerate(frames):
            write_pgm(out / f"frame_{i:05d}.pgm", f)
    info = {"frames": len(frames)}
    if rec is not None:
        info["trace_digest"] = rec.digest()
    click.echo(json.dumps(info))


@main.command()
@click.option("--input", "src", required=True, type=click.Path(exists=True),
              help="OVC container, frame directory or frame file.")
@config_option
@set_option
@click.option("--variant", type=click.Choice(["classifier", "detector"]))
@click.option("--stripes", type=int)
@click.option("--workers", type=int)
@click.option("--trace/--no-trace", default=True, show_default=True)
@click.option("--pipelined", is_flag=True, help="Decode on a worker thread behind a bounded queue.")
@click.option("--timing/--no-timing", default=True, show_default=True,
              help="Include per-stage latencies in the report.")
@click.option("--output", type=click.Path(dir_okay=False), help="Report path (default: stdout).")
def run(src, config_path, sets, variant, stripes, workers, trace, pipelined, timing, output):
    """Run the analytics pipeline and print a JSON report."""
    from .codec.container import DecodeError
    from .ingest import IngestError
    from .pipeline import run_pipeline

    cfg = _config(config_path, sets, variant=variant, stripes=stripes, workers=workers)
    try:
        rep = run_pipeline(src, cfg, trace=trace, pipelined=pipelined)
    except (ConfigError, DecodeError, IngestError) as exc:
        raise click.ClickException(str(exc)) from exc
    _emit(json.dumps(rep.to_dict(timing), indent=2, sort_keys=True), output)


@main.command()
@click.option("--stage", "stages", multiple=True, type=click.Choice(["crop", "bbox", "decode"]),
              help="Stage to time; repeatable (default: all).")
@click.option("--variant", "variants", multiple=True,
              type=click.Choice(["oblivious", "naive-oblivious", "non-oblivious"]),
              help="Implementation to time; repeatable (default: all).")
@click.option("--reps", type=int, default=20, show_default=True)
@click.option("--resolution", default="1280x720", show_default=True, metavar="WxH")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--quant", type=int, default=8, show_default=True)
@click.option("--workers", default="1,2,4,8", show_default=True,
              help="Worker counts swept by the stripe benchmark.")
@click.option("--output", type=click.Path(dir_okay=False), help="CSV path (default: stdout).")
@click.option("--summary", is_flag=True, help="Print the headline speedup ratios to stderr.")
def bench(stages, variants, reps, resolution, seed, quant, workers, output, summary):
    """Median latencies as CSV: stage,variant,width,height,param_set,median_ms,reps."""
    import io

    from . import bench as b

    w, h = _resolution(resolution)
    try:
        ws = tuple(int(v) for v in workers.split(","))
        rows = b.bench(stages or b.STAGES, variants or b.VARIANTS, reps, w, h, seed, quant, ws)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    buf = io.StringIO()
    b.write_csv(rows, buf)
    _emit(buf.getvalue(), output)
    if summary:
        click.echo(json.dumps({k: round(v, 2) for k, v in b.speedups(rows, w, h).items()}), err=True)


@main.command()
@config_option
@set_option
@click.option("--trials", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--resolution", "resolutions", multiple=True, metavar="WxH",
              help="Resolution to check; repeatable (default: 64x64 and 128x128).")
@click.option("--line-bytes", type=int, default=1, show_default=True,
              help="Cache-line size of the trace model; 1 is element-granular.")
@click.option("--controls/--no-controls", default=True, show_default=True,
              help="Also run the leaky fixtures, which must fail.")
@click.option("--only", multiple=True, help="Restrict to checks whose name starts with this.")
@click.option("--output", type=click.Path(dir_okay=False), help="Report path (default: stdout).")
def verify(config_path, sets, trials, seed, resolutions, line_bytes, controls, only, output):
    """Check every oblivious operation by trace equality; exit 1 on any failure."""
    from .verify import DEFAULT_RESOLUTIONS, to_json, verify_all

    cfg = _config(config_path, sets)
    res = tuple(_resolution(r) for r in resolutions) or DEFAULT_RESOLUTIONS
    try:
        report = verify_all(cfg, trials, seed, res, controls, line_bytes, tuple(only))
    except (ConfigError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    _emit(to_json(report), output)
    if not report["passed"]:
        sys.exit(1)


@main.command()
@click.option("--scenario", type=click.Choice(["moving-square", "two-blobs", "static"]),
              default="moving-square", show_default=True)
@click.option("--frames", type=int, default=100, show_default=True)
@click.option("--resolution", default="128x128", show_default=True, metavar="WxH")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--size", type=int, default=16, show_default=True, help="Square side in pixels.")
@click.option("--noise", type=float, default=2.0, show_default=True, help="Sensor noise std-dev.")
@click.option("--lead-in", type=int, default=0, show_default=True,
              help="Background-only frames before motion starts.")
@click.option("--output", required=True, type=click.Path(file_okay=False),
              help="Directory for PGM frames and truth.json.")
def synth(scenario, frames, resolution, seed, size, noise, lead_in, output):
    """Write a scripted test video with its ground-truth boxes."""
    from .ingest import write_pgm
    from .synth import synth_video

    w, h = _resolution(resolution)
    try:
        v = synth_video(scenario, frames, w, h, seed, size, noise, lead_in)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    out = Path(output)
    out.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(v.frames):
        write_pgm(out / f"frame_{i:05d}.pgm", f)
    (out / "truth.json").write_text(json.dumps({"scenario": scenario, "width": w, "height": h,
                                                "boxes": v.truth}) + "\n")
    click.echo(json.dumps({"frames": len(v.frames), "output": str(out)}))


if __name__ == "__main__":  # pragma: no cover
    main()
