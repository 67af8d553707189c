"""
Contains JSON schema for scenario files, model files and emitted reports.

Scenario files are validated before a Scenario object is built so that usage
errors are reported with the offending key rather than as a failure deep in a
task.  Reports are validated before they are written.
"""

TASK_NAMES = [
    "leibniz-suite",
    "trace-crosscheck",
    "spectrum",
    "poincare",
    "cd",
    "bl",
    "rigidity",
    "jacobian-symmetry",
]

NON_EMPTY_STRING = {"type": "string", "minLength": 1}

POSITIVE_NUMBER = {"type": "number", "exclusiveMinimum": 0}

RATIONAL_SCHEMA = {
    "description": "Exact rational entry: an integer or a string such as '3/2' or '0.25'",
    "anyOf": [
        {"type": "integer"},
        {"type": "string", "pattern": r"^\s*-?\d+(\.\d+)?(/\d+)?\s*$"},
    ],
}

MATRIX_SCHEMA = {
    "description": "Square matrix given as a list of rows of rationals",
    "type": "array",
    "minItems": 1,
    "items": {"type": "array", "minItems": 1, "items": RATIONAL_SCHEMA},
}

MODEL_SCHEMA = {
    "description": "Covariance C of the semicircular family, or the quadratic form A with C = A^-1",
    "type": "object",
    "minProperties": 1,
    "maxProperties": 1,
    "properties": {"covariance": MATRIX_SCHEMA, "quadratic_form": MATRIX_SCHEMA},
    "additionalProperties": False,
}

TOLERANCES_SCHEMA = {
    "description": "Numeric tolerances per verdict",
    "type": "object",
    "properties": {
        "eigen": POSITIVE_NUMBER,
        "affine": POSITIVE_NUMBER,
        "orthogonality": POSITIVE_NUMBER,
        "moment": POSITIVE_NUMBER,
        "resolvent": POSITIVE_NUMBER,
        "mc_sigmas": POSITIVE_NUMBER,
    },
    "additionalProperties": False,
}

MONTE_CARLO_SCHEMA = {
    "description": "Random matrix cross-check settings",
    "type": "object",
    "properties": {
        "matrix_size": {"type": "integer", "minimum": 2},
        "trials": {"type": "integer", "minimum": 1},
        "words": {"type": "array", "minItems": 1, "items": NON_EMPTY_STRING},
    },
    "additionalProperties": False,
}

LOGGING_SCHEMA = {
    "type": "object",
    "properties": {
        "level": {"type": "string", "enum": ["debug", "info", "warning", "error", "critical"]}
    },
    "additionalProperties": False,
}

SCENARIO_SCHEMA = {
    "description": "Format of a scenario file",
    "type": "object",
    "properties": {
        "name": NON_EMPTY_STRING,
        "n": {"type": "integer", "minimum": 1},
        "degree": {"type": "integer", "minimum": 1},
        "tensor_degree": {"type": "integer", "minimum": 0},
        "tasks": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "string", "enum": TASK_NAMES},
        },
        "model": MODEL_SCHEMA,
        "potential": NON_EMPTY_STRING,
        "seed": {"type": "integer", "minimum": 0},
        "output": NON_EMPTY_STRING,
        "alphas": {"type": "array", "minItems": 1, "items": POSITIVE_NUMBER},
        "suite_size": {"type": "integer", "minimum": 1},
        "tolerances": TOLERANCES_SCHEMA,
        "monte_carlo": MONTE_CARLO_SCHEMA,
        "logging": LOGGING_SCHEMA,
    },
    "required": ["n", "degree", "tasks"],
    "additionalProperties": False,
}

MODEL_FILE_SCHEMA = {
    "description": "Format of a --model file",
    "type": "object",
    "properties": {"n": {"type": "integer", "minimum": 1}, "C": MATRIX_SCHEMA, "A": MATRIX_SCHEMA},
    "required": ["n"],
    "oneOf": [{"required": ["C"]}, {"required": ["A"]}],
    "additionalProperties": False,
}

TASK_RESULT_SCHEMA = {
    "description": "Every task records whether its verdict passed",
    "type": "object",
    "properties": {"passed": {"type": "boolean"}},
    "required": ["passed"],
}

CONJUGATE_RELATION_SCHEMA = {
    "description": "Residuals of the conjugate relation for a scenario with a potential",
    "type": "object",
    "properties": {
        "max_residual": RATIONAL_SCHEMA,
        "checked": {"type": "integer", "minimum": 0},
        "exact_state": {"type": "boolean"},
        "consistent": {"type": "boolean"},
    },
    "required": ["max_residual", "checked", "exact_state", "consistent"],
}

REPORT_SCHEMA = {
    "description": "Format of report.json",
    "type": "object",
    "properties": {
        "scenario": {"type": "object"},
        "tasks": {"type": "object", "additionalProperties": TASK_RESULT_SCHEMA},
        "passed": {"type": "boolean"},
        "failed_tasks": {"type": "array", "items": {"type": "string", "enum": TASK_NAMES}},
        "conjugate_relation": CONJUGATE_RELATION_SCHEMA,
        "generated_at": NON_EMPTY_STRING,
    },
    "required": ["scenario", "tasks", "passed", "failed_tasks"],
}
