"""ABC-MCMC with a quasi-likelihood proposal built from a pilot run."""

import os as _os

_data = _os.path.join(_os.path.dirname(__file__), "data")
if _os.path.isdir(_data):
    _os.environ.setdefault("QLABC_DATA_DIR", _data)

from ._core import (  # noqa: E402
    ConfigError,
    Error,
    InitFailed,
    OutOfDomain,
    SchemaMismatch,
    Simulator,
    Surrogate,
    abc_mcmc,
    abc_rejection,
    fit_surrogate,
    load_surrogate,
    log_bayes_factor,
    make_simulator,
    model_names,
    normalize_config,
    run,
    verify_proposition1,
)

__version__ = "0.1.0"
