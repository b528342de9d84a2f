import textwrap
from dotenv import load_dotenv
import os


def format_title(info: dict) -> str:
    """
    Formats the start-up banner with run information below the ASCII art.

    Args:
        info (dict): A dictionary with keys as names and values as information to be printed.

    Returns:
        str: The banner text.
    """
    ascii_art_top = """
.----------------------------------.
|                                  |
|     █████╗ ██████╗ ██╗   ██╗██╗  |
|    ██╔══██╗██╔══██╗██║   ██║██║  |
|    ███████║██║  ██║██║   ██║██║  |
|    ██╔══██║██║  ██║╚██╗ ██╔╝██║  |
|    ██║  ██║██████╔╝ ╚████╔╝ ██║  |
|    ╚═╝  ╚═╝╚═════╝   ╚═══╝  ╚═╝  |
"""

    empty_line = "|                                  |\n"
    closing_line = "'----------------------------------'\n"
    box_width = 34  # Characters between the pipes

    additional_info_block = empty_line

    for key, value in info.items():
        content = f"{key}: {value}"
        if len(content) > box_width:
            content = textwrap.shorten(content, width=box_width, placeholder="...")

        padding = (box_width - len(content)) // 2
        formatted_line = f"|{' ' * padding}{content}{' ' * (box_width - len(content) - padding)}|\n"
        additional_info_block += formatted_line
        additional_info_block += empty_line

    formatted_title = ascii_art_top + additional_info_block + closing_line
    return formatted_title.strip()


load_dotenv()

VERSION = "0.1.0"
VERSION_NAME = "Beta"
PROJECT_NAME = "advi"

DEBUG = os.getenv('ADVI_DEBUG', '0') == '1'

# Logging
ADVI_LOG_LEVEL = os.getenv('ADVI_LOG_LEVEL', 'INFO').upper()
ADVI_LOG_DIR = os.getenv('ADVI_LOG_DIR', None)  # No file logs unless set

# Inference defaults
ADVI_THREADS = int(os.getenv('ADVI_THREADS', 1))  # 1 keeps runs bit-reproducible
ADVI_OUTPUT_SAMPLES = int(os.getenv('ADVI_OUTPUT_SAMPLES', 1000))
ADVI_LOG_EVERY = int(os.getenv('ADVI_LOG_EVERY', 100))
ADVI_MAX_REDRAWS = int(os.getenv('ADVI_MAX_REDRAWS', 8))
