"""Evolving robot navigation policies on LLM-curated arena curricula.

Subpackage map:

- `arena`: 15x15 tile arenas (parse/render, world geometry, random generation)
- `simulation`: differential-drive robot episodes with ray sensors
- `policy`: genetic-programming expression trees and the controller wrapper
- `optimizer`: grid-archive quality-diversity search (stage runner)
- `feedback`: metrics text and SVG/PNG plots sent back to the case designer
- `gateway`: chat transports, prompt templates, response parsing and repair
- `orchestrator`: interactive runs, baselines, batch replay, run directories
- `stats`: exact rank statistics and cross-run comparison tables
- `cli`: the `evonav` command
"""

__version__ = "0.1.0"
