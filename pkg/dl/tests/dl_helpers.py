import subprocess
import sys

TRACE_CLI = [sys.executable, "-m", "vcfp.cli"]


def run_trace_cli(args):
    """Invoke the trace workbench CLI; it is this package's data producer."""
    proc = subprocess.run([*TRACE_CLI, *args], capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"trace CLI failed: {proc.stderr}")
    return proc
