import subprocess
import sys
from pathlib import Path


def test_benchmark_script_runs():
    script = Path(__file__).parent.parent / "benchmarks" / "bench_kernels.py"
    out = subprocess.run(
        [sys.executable, str(script), "--repeats", "1", "--chains", "5"],
        capture_output=True,
        text=True,
        timeout=300,
    )
    assert out.returncode == 0, out.stderr
    assert "reverse_step_probs" in out.stdout
    assert "end-to-end sampling" in out.stdout
