"""cchain: a certainty-chaining expert-system shell.

The package splits into small layers:

* ``algebra``    -- certainty-factor arithmetic.
* ``kb``         -- knowledge-base model, parsing, validation, serialisation.
* ``authoring``  -- questionnaire CSVs -> knowledge base.
* ``engine``     -- event-sourced diagnosis sessions and verdicts.
* ``harness``    -- batch evaluation and CSV reports.
* ``store``      -- append-only session persistence.
* ``api``        -- HTTP service.
* ``cli``        -- command-line entry points.
"""

__version__ = "0.1.0"
