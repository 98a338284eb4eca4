"""``convert-bfm``: command-line front end for the converter.

Exit codes: 0 success, 2 usage error, 3 conversion or I/O failure.
"""

from __future__ import annotations

import sys

import click

from .convert import ConversionError, ConversionManifest, convert


@click.command()
@click.option("--base", "base_path", type=click.Path(), required=True,
              help="MAT file with mean shape, identity and texture bases")
@click.option("--exp", "exp_path", type=click.Path(), required=True,
              help="MAT file with the expression basis")
@click.option("--info", "info_path", type=click.Path(), required=True,
              help="MAT file with triangulation, landmarks and region masks")
@click.option("--indices", "indices_path", type=click.Path(), required=True,
              help="text file of 0-based kept source-vertex indices")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--report", "report_path", type=click.Path(), default=None,
              help="write the conversion report as JSON")
@click.option("--k-id", type=int, default=80, show_default=True)
@click.option("--k-exp", type=int, default=64, show_default=True)
@click.option("--k-tex", type=int, default=80, show_default=True)
@click.option("--source-vertices", type=int, default=53215, show_default=True)
@click.option("--expect-vertices", type=int, default=35709, show_default=True)
@click.option("--scale", type=float, default=1.0, show_default=True)
@click.option("--recenter/--no-recenter", default=False)
def main(base_path, exp_path, info_path, indices_path, out_path, report_path,
         k_id, k_exp, k_tex, source_vertices, expect_vertices, scale, recenter):
    """Convert locally licensed MAT-format face-model assets to MFM1."""
    try:
        manifest = ConversionManifest(
            base_path=base_path, exp_path=exp_path, info_path=info_path,
            indices_path=indices_path, out_path=out_path,
            k_id=k_id, k_exp=k_exp, k_tex=k_tex,
            source_vertices=source_vertices, expected_vertices=expect_vertices,
            scale=scale, recenter=recenter)
        report = convert(manifest)
    except (ConversionError, OSError, ValueError) as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(3)
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
    click.echo(f"wrote {report.out_path}: V={report.vertices} "
               f"T={report.triangles} K=({report.k_id},{report.k_exp},"
               f"{report.k_tex}) L={report.landmarks} "
               f"sha256={report.payload_sha256[:16]}…")


if __name__ == "__main__":
    main()
