"""Command-line client for the experiment service.

Every subcommand is a thin HTTP call. By default the service app runs
in-process (same filesystem, no server needed); pass --server or set
MIHASH_SERVER to target a running instance instead.
"""

from __future__ import annotations

import asyncio
import json
from pathlib import Path

import click
import httpx


def _post(server: str | None, path: str, payload: dict) -> dict:
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            response = client.post(path, json=payload)
    else:
        from .service import create_app

        async def _call() -> httpx.Response:
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://mihash",
                                         timeout=None) as client:
                return await client.post(path, json=payload)

        response = asyncio.run(_call())
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except json.JSONDecodeError:
            detail = response.text
        raise click.ClickException(f"{path} failed ({response.status_code}): {detail}")
    return response.json()


def _abs(path: str | None) -> str | None:
    return None if path is None else str(Path(path).resolve())


server_option = click.option("--server", envvar="MIHASH_SERVER", default=None,
                             help="Service URL; omitted = run in-process.")


@click.group()
def main() -> None:
    """Binary hash embeddings: train, evaluate, and query over Hamming space."""


@main.command()
@click.option("--classes", type=int, default=10, show_default=True)
@click.option("--per-class", type=int, default=100, show_default=True)
@click.option("--dim", type=int, default=32, show_default=True)
@click.option("--separation", type=float, default=6.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--features-out", required=True,
              help="Output path (.csv or packed binary).")
@click.option("--labels-out", required=True)
@server_option
def synth(classes, per_class, dim, separation, seed, features_out, labels_out,
          server) -> None:
    """Generate a synthetic clustered dataset."""
    reply = _post(server, "/synth", {
        "classes": classes, "per_class": per_class, "dim": dim,
        "separation": separation, "seed": seed,
        "features_out": _abs(features_out), "labels_out": _abs(labels_out),
    })
    click.echo(f"wrote {reply['count']} x {reply['dim']} features to "
               f"{reply['features_path']}")
    click.echo(f"wrote labels to {reply['labels_path']}")


@main.command()
@click.argument("config", type=click.Path(exists=True))
@server_option
def train(config, server) -> None:
    """Train a hash model from a TOML experiment config."""
    reply = _post(server, "/train", {"config_path": _abs(config)})
    click.echo(f"model: {reply['model_path']}")
    click.echo(f"log: {reply['log_path']}")
    if reply.get("final_objective") is not None:
        click.echo(f"final mean objective: {reply['final_objective']:.6f}")
    if reply.get("final_val_map") is not None:
        click.echo(f"final val mAP: {reply['final_val_map']:.6f}")


@main.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--k", "k_values", type=int, multiple=True,
              help="Cutoffs for mAP@K and precision@K; repeatable.")
@click.option("--report-out", default="report.csv", show_default=True)
@click.option("--plot-dists", is_flag=True,
              help="Also dump mean distance distributions (CSV + SVG).")
@click.option("--dists-csv-out", default=None)
@click.option("--dists-svg-out", default=None)
@server_option
def eval_cmd(model_path, config_path, k_values, report_out, plot_dists,
             dists_csv_out, dists_svg_out, server) -> None:
    """Evaluate a model: mAP, mAP@K, precision@K over the test/retrieval split."""
    reply = _post(server, "/eval", {
        "model_path": _abs(model_path), "config_path": _abs(config_path),
        "k_values": list(k_values), "report_out": _abs(report_out),
        "plot_dists": plot_dists, "dists_csv_out": _abs(dists_csv_out),
        "dists_svg_out": _abs(dists_svg_out),
    })
    click.echo(f"mAP: {reply['map']:.6f}")
    for k, v in sorted(reply["map_at"].items(), key=lambda kv: int(kv[0])):
        click.echo(f"mAP@{k}: {v:.6f}")
    for k, v in sorted(reply["precision_at"].items(), key=lambda kv: int(kv[0])):
        click.echo(f"precision@{k}: {v:.6f}")
    click.echo(f"report: {reply['report_path']}")
    if reply.get("dists_csv_path"):
        click.echo(f"distributions: {reply['dists_csv_path']} "
                   f"{reply['dists_svg_path']}")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--codes", "codes_path", required=True, type=click.Path(exists=True))
@click.option("--features", "features_path", required=True,
              type=click.Path(exists=True))
@click.option("-k", type=int, default=10, show_default=True)
@server_option
def query(model_path, codes_path, features_path, k, server) -> None:
    """Rank a code database against query feature vectors."""
    reply = _post(server, "/query", {
        "model_path": _abs(model_path), "codes_path": _abs(codes_path),
        "features_path": _abs(features_path), "k": k,
    })
    for warning in reply["warnings"]:
        click.echo(f"warning: {warning}", err=True)
    for qi, hits in enumerate(reply["results"]):
        line = " ".join(f"({h['index']}, {h['distance']})" for h in hits)
        click.echo(f"query {qi}: {line}")


@main.command("export-codes")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--features", "features_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", "codes_out", required=True)
@click.option("--csv-out", default=None, help="Optional +-1 text export.")
@server_option
def export_codes(model_path, features_path, codes_out, csv_out, server) -> None:
    """Hash a feature file into a packed binary code database."""
    reply = _post(server, "/export-codes", {
        "model_path": _abs(model_path), "features_path": _abs(features_path),
        "codes_out": _abs(codes_out), "csv_out": _abs(csv_out),
    })
    click.echo(f"wrote {reply['count']} codes of {reply['code_length']} bits "
               f"to {reply['codes_path']}")


@main.command("plot-dists")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--csv-out", default="dists.csv", show_default=True)
@click.option("--svg-out", default="dists.svg", show_default=True)
@server_option
def plot_dists(model_path, config_path, csv_out, svg_out, server) -> None:
    """Dump mean neighbor/non-neighbor distance distributions."""
    reply = _post(server, "/plot-dists", {
        "model_path": _abs(model_path), "config_path": _abs(config_path),
        "csv_out": _abs(csv_out), "svg_out": _abs(svg_out),
    })
    click.echo(f"overlap: {reply['overlap']:.6f}")
    click.echo(f"wrote {reply['csv_path']} and {reply['svg_path']}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8321, show_default=True)
def serve(host, port) -> None:
    """Run the experiment service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
