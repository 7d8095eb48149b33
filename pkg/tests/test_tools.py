"""Tests for the MCP experiment tools."""

import logging

import pytest

from src.runner import SUITES
from src.server import AdeleTraceServer
from src.tools.experiments import (
    EXPERIMENT_TOOLS,
    get_experiment_tool_definitions,
    handle_experiment_tool,
)


def test_tool_definitions():
    tools = get_experiment_tool_definitions()
    assert {t.name for t in tools} == EXPERIMENT_TOOLS
    suite_tool = next(t for t in tools if t.name == "run_suite")
    assert suite_tool.inputSchema["properties"]["name"]["enum"] == sorted(SUITES)


@pytest.mark.asyncio
async def test_run_experiment():
    result = await handle_experiment_tool(
        "run_experiment",
        {"subcommand": "pv", "params": {"op": "unit_shell_regularization", "primes": [5]}},
    )
    text = result[0].text
    assert "**pv-unit_shell_regularization**: PASS" in text
    assert "- **Operation:** pv unit_shell_regularization" in text


@pytest.mark.asyncio
async def test_invalid_params_are_reported():
    result = await handle_experiment_tool(
        "run_experiment", {"subcommand": "pv", "params": {"colour": "red"}}
    )
    assert result[0].text.startswith("Error:")
    assert "params.colour" in result[0].text


@pytest.mark.asyncio
async def test_unknown_tool():
    result = await handle_experiment_tool("set_temperature", {})
    assert result[0].text == "Error: Unknown experiment tool: set_temperature"


@pytest.mark.asyncio
async def test_list_operations():
    result = await handle_experiment_tool("list_operations", {})
    text = result[0].text
    assert text.startswith("**Available Operations:**")
    assert "`cutoff_trace.trace_padic`: `adele-trace trace trace_padic`" in text


@pytest.mark.asyncio
async def test_server_initializes_against_the_cache(zeros_200):
    server = AdeleTraceServer()
    await server.initialize()
    assert server.zero_heights[-1] >= 200.0


def test_zero_cache_growth_is_logged(zeros_200, caplog):
    server = AdeleTraceServer()
    caplog.set_level(logging.INFO, logger="src.server")
    heights = server.refresh_zero_cache()
    assert server.zero_heights == heights
    assert any("up to E =" in r.message for r in caplog.records)
    caplog.clear()
    server.refresh_zero_cache()
    assert not any("up to E =" in r.message for r in caplog.records)
