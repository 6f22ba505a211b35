"""Operator CLI: seeding, scenario runs, exports and coverage rendering.

All commands talk to the platform through the public gateway contract, so
the CLI doubles as an API conformance client. Exit codes: 0 success,
1 assertion/scenario failure, 2 usage error.
"""

import json
import os
import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import click
import yaml

from .clock import SimClock, parse_iso
from .httpapi import Request
from .platform import Platform
from .scenarios import SCENARIOS, run_scenario
from . import render


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return yaml.safe_load(fh) or {}


def _make_clock(spec: str | None):
    if spec is None:
        return None
    if spec.startswith("fixed:"):
        return SimClock(parse_iso(spec[len("fixed:"):]))
    raise click.UsageError(f"unsupported clock spec {spec!r}; use fixed:<iso8601>")


def _build_platform(config_path, seed, clock_spec):
    config = _load_config(config_path)
    platform = Platform(config=config, clock=_make_clock(clock_spec), seed=seed)
    seed_info = platform.seed_demo()
    return platform, seed_info


@click.group()
def main():
    """Telehealth orchestration platform operator commands."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--json", "as_json", is_flag=True, default=False)
def seed(config_path, seed, as_json):
    """Create the demo site/projects/users/devices (idempotent)."""
    _, seed_info = _build_platform(config_path, seed, None)
    if as_json:
        click.echo(json.dumps(seed_info, sort_keys=True, indent=2))
    else:
        for kind, count in seed_info["counts"].items():
            click.echo(f"{kind}: {count}")


@main.command("run-scenario")
@click.argument("name", type=click.Choice(SCENARIOS))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=0)
@click.option("--clock", "clock_spec", default="fixed:2024-01-02T09:00:00+00:00",
              show_default=True)
@click.option("--out", "outdir", type=click.Path(), default="out")
@click.option("--json", "as_json", is_flag=True, default=False)
def run_scenario_cmd(name, config_path, seed, clock_spec, outdir, as_json):
    """Run a scripted end-to-end scenario and write its report."""
    platform, seed_info = _build_platform(config_path, seed, clock_spec)
    report = run_scenario(name, platform, seed_info,
                          os.path.join(outdir, name), seed=seed)
    if as_json:
        click.echo(json.dumps(report, sort_keys=True, indent=2))
    else:
        for assertion in report["assertions"]:
            mark = "ok" if assertion["passed"] else "FAIL"
            click.echo(f"[{mark}] {assertion['name']} {assertion['detail']}".rstrip())
        click.echo(f"report: {os.path.join(outdir, name, 'report.json')}")
    if report["failed"]:
        sys.exit(1)


@main.command("export-session")
@click.argument("session_id")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
def export_session(session_id, config_path, seed):
    """Export one session (events + asset manifest) as JSON."""
    platform, _ = _build_platform(config_path, seed, None)
    response = platform.gateway.dispatch(Request(
        method="GET", path=f"/api/core/sessions/{session_id}/export",
        headers={"authorization": f"Bearer {platform.admin_token()}"}))
    click.echo(json.dumps(response.json, sort_keys=True, indent=2))
    if response.status >= 400:
        sys.exit(1)


@main.command("render-coverage")
@click.argument("robot_name", default="robot-1")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "outdir", type=click.Path(), default=None,
              help="Also write coverage.ppm and coverage.png here.")
def render_coverage(robot_name, config_path, outdir):
    """Render a robot's coverage map as an ASCII grid (G/W/D)."""
    platform, seed_info = _build_platform(config_path, None, None)
    robot_id = seed_info["devices"].get(robot_name, robot_name)
    runtime = platform.robots.robots.get(robot_id)
    if runtime is None:
        raise click.UsageError(f"unknown robot {robot_name!r}")
    click.echo(render.ascii_coverage(runtime.coverage, runtime.world))
    if outdir:
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "coverage.ppm"), "wb") as fh:
            fh.write(render.ppm_coverage(runtime.coverage, runtime.world))
        render.coverage_figure(runtime.coverage,
                               os.path.join(outdir, "coverage.png"), runtime.world)
        click.echo(f"wrote {outdir}/coverage.ppm and {outdir}/coverage.png")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--bind", default="127.0.0.1:8080", show_default=True)
def serve(config_path, bind):
    """Serve the gateway over HTTP (for the web frontend)."""
    platform, _ = _build_platform(config_path, None, None)
    host, _, port = bind.partition(":")

    class Handler(BaseHTTPRequestHandler):
        def _dispatch(self):
            parsed = urlparse(self.path)
            length = int(self.headers.get("content-length") or 0)
            body = self.rfile.read(length) if length else None
            query = {k: v[0] for k, v in parse_qs(parsed.query).items()}
            request = Request(method=self.command, path=parsed.path, query=query,
                              headers={k.lower(): v for k, v in self.headers.items()},
                              body=body)
            response = platform.gateway.dispatch(request)
            self.send_response(response.status)
            for key, value in response.headers.items():
                self.send_header(key, value)
            self.send_header("access-control-allow-origin", "*")
            self.send_header("access-control-allow-headers", "authorization,content-type")
            self.send_header("access-control-allow-methods", "GET,POST,PATCH,DELETE")
            self.end_headers()
            self.wfile.write(response.body)

        do_GET = do_POST = do_PATCH = do_DELETE = _dispatch

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("access-control-allow-origin", "*")
            self.send_header("access-control-allow-headers", "authorization,content-type")
            self.send_header("access-control-allow-methods", "GET,POST,PATCH,DELETE")
            self.end_headers()

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer((host or "127.0.0.1", int(port or 8080)), Handler)
    click.echo(f"gateway listening on http://{bind}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass


if __name__ == "__main__":
    main()
