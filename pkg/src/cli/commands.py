import logging
from pathlib import Path
from typing import List, Optional

import click

from src.config import INTERFACE_VERSION, SCHEMA_VERSION, __version__
from src.exceptions import SteinVerifyError
from src.models.estimates import Verdict
from src.models.experiment import EXPERIMENTS
from src.services.cache_service import CacheManager
from src.services.experiment_service import ExperimentService
from src.services.file_service import FileService

logger = logging.getLogger("stein_verify")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED_VERDICT = 2

HELP = {
    "lemmas": "Check the pointwise properties of f(A, eps), h_eps and the Gaussian integrals.",
    "gaussian-concentration": "Gaussian shell probabilities against sqrt(k)(eps1 + eps2).",
    "sum-concentration": "Leave-one-out shell probabilities for sums of independent vectors.",
    "berry-esseen": "Convex-set discrepancy of W against 115 sqrt(k) gamma.",
    "adversarial": "Search half-spaces for the largest discrepancy and confirm it on fresh samples.",
    "stein-residual": "Residual of the numerical Stein solution at probe points.",
}


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="stein-verify", message=f"%(prog)s %(version)s (interface {INTERFACE_VERSION}, record schema {SCHEMA_VERSION})")
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    default="WARNING",
    show_default=True,
)
def cli(log_level: str):
    """Numerical verification of multivariate normal approximation bounds for convex sets."""
    logging.basicConfig(level=log_level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _summary(record) -> str:
    lines = []
    for row in FileService.rows(record):
        lines.append(f"{row['verdict']:<8} {row['set_id']}  p_hat={row['p_hat']:.6g}  bound={row['bound']:.6g}")
    counts = {v: sum(x is v for x in record.verdicts()) for v in Verdict}
    lines.append(", ".join(f"{v.value}: {c}" for v, c in counts.items()))
    return "\n".join(lines)


def _experiment_command(name: str) -> click.Command:
    @click.command(name=name, help=HELP[name])
    @click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False, path_type=Path),
                  help="TOML experiment configuration")
    @click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), default=None,
                  help="output file; a summary is printed when omitted")
    @click.option("--format", "fmt", type=click.Choice(["csv", "json", "svg"]), default="csv", show_default=True)
    @click.option("--workers", type=click.IntRange(min=1), default=None, help="overrides the configured worker count")
    @click.pass_context
    def command(ctx: click.Context, config_path: Path, out_path: Optional[Path], fmt: str, workers: Optional[int]):
        try:
            config = ExperimentService.load_config(config_path)
            if config.experiment != name:
                raise click.UsageError(f"{config_path} configures '{config.experiment}', not '{name}'")
            if workers is not None:
                config = config.model_copy(update={"workers": workers})
            record = ExperimentService.run(config)
            if out_path is not None:
                FileService.emit(record, fmt, out_path)
            else:
                click.echo(_summary(record))
        except (SteinVerifyError, OSError, ValueError, click.UsageError) as e:
            logger.error(f"{name}: {e}")
            click.echo(f"error: {e}", err=True)
            ctx.exit(EXIT_ERROR)
        finally:
            CacheManager.clear_all()
        ctx.exit(EXIT_FAILED_VERDICT if record.failed else EXIT_OK)

    return command


for _name in EXPERIMENTS:
    cli.add_command(_experiment_command(_name))


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; usage errors exit with 1 so that 2 always means a failed verdict."""
    try:
        code = cli.main(args=argv, prog_name="stein-verify", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_ERROR
    except click.Abort:
        return EXIT_ERROR
    return code if isinstance(code, int) else EXIT_OK
