"""The `extract` command-line tool.

Default mode encodes an image source into a VMFE embedding file;
``--verify PATH`` instead validates an existing file and prints its
summary (dimensions, counts, row-norm range).
"""
from __future__ import annotations

import logging
import sys

import click

from .encoders import EncoderLoadError
from .extract import ExtractorConfig, extract
from .format import FormatError, summarize


@click.command(context_settings={"auto_envvar_prefix": "VMFE_EXTRACT"})
@click.option("--model", default=None,
              help="Encoder id: 'stub:<dim>' or a Hugging Face checkpoint name.")
@click.option("--input", "source", default=None,
              help="Image folder (class subdirectories) or named benchmark.")
@click.option("--output", default=None, help="Destination .vmfe path.")
@click.option("--batch-size", default=64, show_default=True, type=click.IntRange(min=1))
@click.option("--device", default="cpu", show_default=True)
@click.option("--split", default="train", show_default=True,
              type=click.Choice(["train", "test"]))
@click.option("--verify", "verify_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Validate an existing VMFE file and print its summary.")
def main(model: str | None, source: str | None, output: str | None,
         batch_size: int, device: str, split: str, verify_path: str | None) -> None:
    """Encode images with a frozen vision encoder into a VMFE file."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    if verify_path is not None:
        try:
            click.echo(summarize(verify_path).render())
        except FormatError as exc:
            raise click.ClickException(f"{verify_path}: {exc}")
        return
    missing = [name for name, value in
               [("--model", model), ("--input", source), ("--output", output)]
               if value is None]
    if missing:
        raise click.UsageError(f"missing {', '.join(missing)} (or use --verify PATH)")
    try:
        cfg = ExtractorConfig(model=model, source=source, output=output,
                              batch_size=batch_size, device=device, split=split)
        result = extract(cfg)
    except (EncoderLoadError, FileNotFoundError, ValueError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {result.output}: {result.rows} rows, d={result.dim}, "
               f"C={result.num_classes}, skipped {result.skipped} unreadable image(s)")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
