"""Validation schemas for the run configuration and calibration files."""

# pylint: disable=R0903
from voluptuous import ALLOW_EXTRA, PREVENT_EXTRA, All, Coerce, Length, Maybe
from voluptuous.schema_builder import Optional, Required, Schema
from voluptuous.validators import PathExists

from core.settings import Settings
from core.stages import Stages

from .validators import AlwaysList, EnvironmentVar

__all__ = ["HeaderSchema", "EnvSchema", "StagesSchema", "ConfigSchema", "CalibrationSchema"]


class HeaderSchema(Schema):
    """Schema for the header of a configuration file."""

    def __init__(self, required=True, extra=ALLOW_EXTRA):
        # pylint: disable=E1120
        s = {
            "labelcloud": {
                "version": "v1",
                Optional("extends", default=[]): AlwaysList(All(EnvironmentVar(), PathExists())),
                Optional("settings", default={}): Optional(
                    {Optional(k): v for k, v in Settings.__annotations__.items()}
                ),
            }
        }

        super().__init__(s, required=required, extra=extra)


class EnvSchema(Schema):
    """Schema for environment variables in configurations."""

    def __init__(self, required=True, extra=ALLOW_EXTRA):
        s = {Optional("env", default={}): Optional({str: EnvironmentVar()})}
        super().__init__(s, required=required, extra=extra)


class StagesSchema(Schema):
    """Schema for the per-stage parameter sections, keyed by subcommand.

    Parameters are only checked loosely here, the selected stage validates its own section."""

    def __init__(self, required=True, extra=ALLOW_EXTRA):
        sections = {Optional(c): Maybe({str: object}) for c in Stages.commands()}
        s = {Optional("stages", default={}): Schema(sections, extra=PREVENT_EXTRA)}
        super().__init__(s, required=required, extra=extra)


class ConfigSchema(Schema):
    """Full schema for a run configuration file."""

    def __init__(self, required=True, extra=PREVENT_EXTRA):
        s = {
            **HeaderSchema(required=required, extra=extra).schema,
            **EnvSchema(required=required, extra=extra).schema,
            **StagesSchema(required=required, extra=extra).schema,
        }
        super().__init__(s, required=required, extra=extra)


class CalibrationSchema(Schema):
    """Schema for a camera calibration file."""

    def __init__(self, required=True, extra=ALLOW_EXTRA):
        number = Coerce(float)
        s = {
            Required("camera"): {
                Required("intrinsics"): {
                    Required("fx"): number,
                    Required("fy"): number,
                    Required("cx"): number,
                    Required("cy"): number,
                    Required("width"): Coerce(int),
                    Required("height"): Coerce(int),
                },
                Optional("extrinsic", default={}): {
                    Optional("translation", default=[0.0, 0.0, 0.0]): All(
                        [number], Length(min=3, max=3)
                    ),
                    Optional("rotation", default=[0.0, 0.0, 0.0, 1.0]): All(
                        [number], Length(min=4, max=4)
                    ),
                },
            }
        }
        super().__init__(s, required=required, extra=extra)
