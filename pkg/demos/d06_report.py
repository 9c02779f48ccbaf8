"""
The full pipeline through the command line
==========================================

Runs index, sweep, train, eval and report with the simulator backend and
prints the resulting metrics table.
"""

# %%
import json
import tempfile
from pathlib import Path

from ragslo.cli import main

root = Path(tempfile.mkdtemp())
main(["desk-corpus", "--out", str(root / "corpus.json")])
(root / "config.json").write_text(json.dumps({"corpus": "corpus.json", "out_dir": "run", "sweep": {"n": 200}}))
cfg = str(root / "config.json")

# %%
main(["--config", cfg, "index"])
main(["--config", cfg, "sweep"])
for slo in ("quality_first", "cheap"):
    main(["--config", cfg, "eval", "--slo", slo, "--fixed", "1"])
    for objective in ("ce", "ce-wt"):
        main(["--config", cfg, "train", "--slo", slo, "--objective", objective])
        main(["--config", cfg, "eval", "--slo", slo, "--model", str(root / "run" / "models" / f"{slo}__{objective}.json")])

# %%
main(["--config", cfg, "report"])
print(sorted(p.name for p in (root / "run" / "report").iterdir()))
