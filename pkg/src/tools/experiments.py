"""MCP tools over the experiment runner."""

import asyncio
import logging
from typing import Any

from mcp.types import TextContent, Tool

from ..runner import PARAMETERS, SUITES, ExperimentConfig, RunRecord, list_operations, run, suite

logger = logging.getLogger(__name__)

EXPERIMENT_TOOLS = {"run_experiment", "run_suite", "list_operations"}

# payload entries longer than this are summarized instead of printed
_MAX_INLINE = 12


def get_experiment_tool_definitions() -> list[Tool]:
    """Get experiment tool definitions for MCP registration."""
    return [
        Tool(
            name="run_experiment",
            description="Run one numerical check (a subcommand, its operation and parameters)",
            inputSchema={
                "type": "object",
                "properties": {
                    "subcommand": {
                        "type": "string",
                        "enum": sorted(PARAMETERS),
                        "description": "Service to run (e.g. 'pv', 'trace', 'adelic')",
                    },
                    "params": {
                        "type": "object",
                        "description": "Operation parameters; 'op' selects the operation",
                        "default": {},
                    },
                    "tolerance": {
                        "type": "number",
                        "description": "Pass/fail tolerance (default: 1e-6)",
                        "default": 1e-6,
                    },
                    "seed": {
                        "type": "integer",
                        "description": "Seed for Monte-Carlo estimates",
                        "default": 0,
                    },
                },
                "required": ["subcommand"],
            },
        ),
        Tool(
            name="run_suite",
            description="Run a named acceptance suite and summarize pass/fail per member",
            inputSchema={
                "type": "object",
                "properties": {
                    "name": {
                        "type": "string",
                        "enum": sorted(SUITES),
                        "description": "Suite name",
                    },
                },
                "required": ["name"],
            },
        ),
        Tool(
            name="list_operations",
            description="List every available operation and the subcommand that runs it",
            inputSchema={
                "type": "object",
                "properties": {},
                "required": [],
            },
        ),
    ]


async def handle_experiment_tool(name: str, arguments: dict[str, Any]) -> list[TextContent]:
    """Handle tool calls for experiments."""
    try:
        if name == "run_experiment":
            return await _run_experiment(arguments)
        elif name == "run_suite":
            return await _run_suite(arguments)
        elif name == "list_operations":
            return _list_operations()
        else:
            raise ValueError(f"Unknown experiment tool: {name}")
    except Exception as e:
        logger.error(f"Error executing experiment tool {name}: {e}")
        return [TextContent(type="text", text=f"Error: {e!s}")]


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    if isinstance(value, list) and len(value) > _MAX_INLINE:
        return f"[{len(value)} entries]"
    if isinstance(value, dict) and set(value) == {"symbolic", "value"}:
        return f"{value['symbolic']} ({value['value']:.12g})"
    if isinstance(value, dict):
        return f"{{{len(value)} fields}}"
    return str(value)


def _format_record(record: RunRecord) -> str:
    status = "PASS" if record.passed else "FAIL"
    result = f"**{record.name}**: {status}\n\n"
    result += f"- **Operation:** {record.subcommand} {record.op}\n"
    result += f"- **Tolerance:** {record.tolerance:g}\n"
    result += f"- **Wall Time:** {record.wall_time:.3f}s\n"
    result += f"- **Config Hash:** `{record.config_hash[:12]}`\n"
    if record.error:
        result += f"- **Error:** {record.error}\n"
    if record.payload:
        result += "\n**Result:**\n"
        for key, value in record.payload.items():
            result += f"- {key}: {_format_value(value)}\n"
    return result


async def _run_experiment(arguments: dict[str, Any]) -> list[TextContent]:
    config = ExperimentConfig.from_mapping(
        {
            "subcommand": arguments["subcommand"],
            "params": arguments.get("params", {}),
            "tolerance": arguments.get("tolerance", 1e-6),
            "seed": arguments.get("seed", 0),
        }
    )
    record = await asyncio.to_thread(run, config)
    return [TextContent(type="text", text=_format_record(record))]


async def _run_suite(arguments: dict[str, Any]) -> list[TextContent]:
    name = arguments["name"]
    records = await asyncio.to_thread(suite, name)
    passed = sum(r.passed for r in records)

    result = f"**Suite {name}** ({passed}/{len(records)} passed)\n\n"
    for r in records:
        mark = "pass" if r.passed else "FAIL"
        result += f"- **{r.name}** ({r.subcommand} {r.op}): {mark}, {r.wall_time:.2f}s\n"
        if r.error:
            result += f"  - {r.error}\n"
    return [TextContent(type="text", text=result)]


def _list_operations() -> list[TextContent]:
    result = "**Available Operations:**\n\n"
    for operation, command in list_operations().items():
        result += f"- `{operation}`: `adele-trace {command}`\n"
    return [TextContent(type="text", text=result)]
