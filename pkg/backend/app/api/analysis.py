from typing import Optional

import click

from app.api.dependencies import config_option, emit, handle_errors, load_config, report_repository
from app.middleware.preflight import run_preflight
from app.services.cost_service import analyze_run


@click.command("analyze")
@config_option
@click.option("--p-fsep", type=click.IntRange(min=1), default=None)
@click.option("--p-ep", type=click.IntRange(min=1), default=None)
@click.option("--p-fsdp", type=click.IntRange(min=1), default=None)
@click.option("--out", default=None, type=click.Path(dir_okay=False), help="Write here instead of stdout")
@handle_errors
def analyze_command(
    config_path: str,
    p_fsep: Optional[int],
    p_ep: Optional[int],
    p_fsdp: Optional[int],
    out: Optional[str],
):
    """Volume ratio, memory footprint and overlap threshold"""
    config = load_config(config_path, analysis__p_fsep=p_fsep, analysis__p_ep=p_ep, analysis__p_fsdp=p_fsdp)
    run_preflight(config, analysis=True)
    emit(report_repository().dumps(analyze_run(config)), out)
