"""calib-lab command line: a thin client over the HTTP service.

``calib-lab run`` submits a config to the /experiments/run endpoint. By
default the FastAPI app is mounted in-process (no network, same
filesystem), so runs work offline; ``--server`` points the same client at
a remote instance, in which case artifacts come back inline and are
written locally. Exit status is 0 on success and nonzero when the run
fails (for example the closed-form verification suite exceeding its
tolerance) or the config is rejected.
"""

from __future__ import annotations

import asyncio
import sys
from pathlib import Path

import click
import httpx

from .service.app import create_app


def _post_run(payload: dict, server: str | None) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            return client.post("/experiments/run", json=payload)

    async def _in_process() -> httpx.Response:
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://caliblab.local", timeout=None
        ) as client:
            return await client.post("/experiments/run", json=payload)

    return asyncio.run(_in_process())


@click.group()
def main():
    """Calibration-limits laboratory."""


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="calib-lab-out",
              show_default=True, help="Directory for run artifacts.")
@click.option("--seed", type=int, default=None, help="Override base_seed.")
@click.option("--arms", type=str, default=None, help="Comma-separated arm list override.")
@click.option("--replicates", type=int, default=None, help="Override replicate count.")
@click.option("--server", type=str, default=None,
              help="Base URL of a running service; default runs in-process.")
def run(config_path, out_dir, seed, arms, replicates, server):
    """Run the experiment described by CONFIG_PATH."""
    config_text = Path(config_path).read_text()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "config_text": config_text,
        "base_seed": seed,
        "replicates": replicates,
        "arms": [a.strip() for a in arms.split(",") if a.strip()] if arms else None,
        # In-process runs share the filesystem, so the service writes
        # directly into --out; remote runs return artifacts inline.
        "out_dir": None if server else str(out.resolve()),
    }
    response = _post_run(payload, server)
    if response.status_code != 200:
        detail = response.json().get("detail", response.text)
        click.echo(f"error: {detail}", err=True)
        sys.exit(2)
    body = response.json()
    for artifact in body["artifacts"]:
        target = out / artifact["path"]
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(artifact["content"])
    click.echo(f"kind: {body['kind']}")
    click.echo(f"status: {body['status']}")
    click.echo(f"out: {out.resolve()}")
    if body.get("failure"):
        click.echo(f"failure: {body['failure']}", err=True)
    click.echo(body["summary_csv"], nl=False)
    sys.exit(0 if body["status"] == "ok" else 1)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Serve the HTTP API with uvicorn."""
    import uvicorn

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
