"""MCP server exposing the adele-trace experiment runner."""

import asyncio
import logging

from mcp.server import Server
from mcp.server.stdio import stdio_server
from mcp.types import TextContent, Tool

from . import __version__
from .config import settings
from .runner import SUITES
from .services.zeta_zeros import cached_heights
from .tools.experiments import (
    EXPERIMENT_TOOLS,
    get_experiment_tool_definitions,
    handle_experiment_tool,
)

logging.basicConfig(
    level=getattr(logging, settings.log_level),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)


class AdeleTraceServer:
    """Adele-trace MCP Server."""

    def __init__(self):
        self.server = Server("adele-trace")
        self.zero_heights: list[float] = []

    async def initialize(self):
        """Prepare the zero-list cache and register tools."""
        logger.info(f"Initializing adele-trace {__version__}")
        settings.cache_dir.mkdir(parents=True, exist_ok=True)
        if not self.refresh_zero_cache():
            logger.warning(
                f"No cached zero lists in {settings.cache_dir}; the first zero search will be slow"
            )
        logger.info(f"Suites: {', '.join(SUITES)}")
        self._register_tool_handlers()

    def refresh_zero_cache(self) -> list[float]:
        """Re-read the cached zero-list heights, logging when they grew."""
        heights = cached_heights()
        if heights and heights != self.zero_heights:
            logger.info(f"Zero lists cached in {settings.cache_dir} up to E = {heights[-1]:g}")
        self.zero_heights = heights
        return heights

    def _register_tool_handlers(self):
        @self.server.list_tools()
        async def list_tools() -> list[Tool]:
            return get_experiment_tool_definitions()

        @self.server.call_tool()
        async def call_tool(name: str, arguments: dict) -> list[TextContent]:
            logger.debug(f"Tool called: {name} with arguments: {arguments}")
            if name not in EXPERIMENT_TOOLS:
                return [TextContent(type="text", text=f"Error: Unknown tool: {name}")]
            result = await handle_experiment_tool(name, arguments)
            self.refresh_zero_cache()
            return result

    async def run(self):
        try:
            await self.initialize()
            async with stdio_server() as (read_stream, write_stream):
                logger.info("Server running on stdio")
                await self.server.run(
                    read_stream,
                    write_stream,
                    self.server.create_initialization_options(),
                )
        except KeyboardInterrupt:
            logger.info("Server interrupted by user")
        except Exception as e:
            logger.error(f"Server error: {e}", exc_info=settings.debug)
            raise


async def main():
    await AdeleTraceServer().run()


def cli():
    """Console entry point for adele-trace-mcp."""
    asyncio.run(main())


if __name__ == "__main__":
    cli()
