"""Template management for game descriptions and run reports."""

from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from jinja2 import Environment, FileSystemLoader, Template, TemplateNotFound, select_autoescape

from .exceptions import ConfigurationError
from .logger import get_logger

logger = get_logger(__name__)


# Templated plain-text description of one game
DEFAULT_DESCRIPTION_TEMPLATE = """\
{%- if setup %}The setup of the game is:
{% for line in setup %}- {{ line }}
{% endfor %}
{% endif -%}
The preferences of the game are:
{% for pref in preferences %}
-----Preference {{ loop.index }}-----
{%- if pref.variables %}
The variables required by this preference are:
{%- for name, types in pref.variables %}
-{{ name }} of type {{ types }}
{%- endfor %}
{%- endif %}

This preference is satisfied when:
{%- for step in pref.steps %}
- {{ step }}
{%- endfor %}
{% endfor %}
{%- if terminal %}
The game ends when {{ terminal }}
{% endif %}
At the end of the game, the score is {{ scoring }}
"""

DEFAULT_REPORT_TEMPLATE = """<!doctype html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>{{ title }} - goal-synth</title>
<meta name="viewport" content="width=device-width, initial-scale=1">
<style>
  :root {
    --primary: #1a365d;
    --accent: #3182ce;
    --gray-100: #edf2f7;
    --gray-200: #e2e8f0;
    --gray-600: #4a5568;
  }
  body { font-family: system-ui, -apple-system, sans-serif; margin: 0; background: #f7fafc;
         color: #1a202c; }
  header { background: var(--primary); color: white; padding: 1.5rem 2rem; }
  main { padding: 1.5rem 2rem; max-width: 1200px; margin: 0 auto; }
  .cards { display: grid; grid-template-columns: repeat(auto-fit, minmax(180px, 1fr));
           gap: 1rem; margin-bottom: 1.5rem; }
  .card { background: white; border: 1px solid var(--gray-200); border-radius: 8px;
          padding: 1rem; }
  .card .value { font-size: 1.6rem; font-weight: 600; color: var(--accent); }
  .card .label { color: var(--gray-600); font-size: 0.85rem; }
  table { border-collapse: collapse; width: 100%; background: white; }
  th, td { border-bottom: 1px solid var(--gray-200); padding: 0.4rem 0.6rem; text-align: left;
           vertical-align: top; font-size: 0.9rem; }
  th { background: var(--gray-100); }
  pre { white-space: pre-wrap; margin: 0; font-size: 0.8rem; }
  img { max-width: 100%; background: white; border: 1px solid var(--gray-200); }
</style>
</head>
<body>
{% autoescape true %}
<header>
  <h1>{{ title }}</h1>
  <div>seed {{ header.seed }} &middot; registry {{ header.registry_version }}
       &middot; config {{ header.config_hash }}</div>
</header>
<main>
  <section class="cards">
    <div class="card"><div class="value">{{ generation }}</div>
      <div class="label">generations</div></div>
    <div class="card"><div class="value">{{ coherent }}/{{ capacity }}</div>
      <div class="label">coherent cells</div></div>
    <div class="card"><div class="value">{{ incoherent }}</div>
      <div class="label">incoherent cells</div></div>
    <div class="card"><div class="value">{{ "%.3f"|format(summary.mean) }}</div>
      <div class="label">mean elite fitness</div></div>
    <div class="card"><div class="value">{{ "%.3f"|format(summary.max) }}</div>
      <div class="label">best elite fitness</div></div>
  </section>
  {% for plot in plots %}
  <p><img src="{{ plot }}" alt="{{ plot }}"></p>
  {% endfor %}
  <h2>Coherent elites</h2>
  <table>
    <thead><tr><th>cell</th><th>fitness</th><th>generation</th><th>game</th></tr></thead>
    <tbody>
    {% for elite in elites %}
      <tr>
        <td>{{ elite.key }}</td>
        <td>{{ "%.4f"|format(elite.fitness) }}</td>
        <td>{{ elite.generation }}</td>
        <td><pre>{{ elite.text }}</pre></td>
      </tr>
    {% endfor %}
    </tbody>
  </table>
</main>
{% endautoescape %}
</body>
</html>
"""

EMBEDDED_TEMPLATES = {
    "description.txt.j2": DEFAULT_DESCRIPTION_TEMPLATE,
    "report.html.j2": DEFAULT_REPORT_TEMPLATE,
}


class TemplateManager:
    """Manage Jinja2 templates for descriptions and HTML output."""

    def __init__(self, template_dir: Optional[Path] = None):
        """Initialize template manager.

        Args:
            template_dir: Optional directory whose templates override the embedded ones
        """
        self.template_dir = Path(template_dir) if template_dir else None
        self.env = self._create_environment()

    def _create_environment(self) -> Environment:
        autoescape = select_autoescape(["html", "xml"], default_for_string=False)
        if self.template_dir and self.template_dir.exists():
            logger.info(f"Using custom templates from {self.template_dir}")
            return Environment(loader=FileSystemLoader(str(self.template_dir)),
                               autoescape=autoescape, keep_trailing_newline=True)
        logger.debug("Using embedded templates")
        return Environment(autoescape=autoescape, keep_trailing_newline=True)

    def get_template(self, name: str) -> Template:
        """Get a template by name, falling back to the embedded default.

        Raises:
            ConfigurationError: If neither a custom nor an embedded template exists
        """
        try:
            return self.env.get_template(name)
        except (TemplateNotFound, TypeError):
            logger.debug(f"Template {name} not found, using embedded default")
            if name in EMBEDDED_TEMPLATES:
                return self.env.from_string(EMBEDDED_TEMPLATES[name])
            raise ConfigurationError(f"Template not found: {name}")

    def render_description(self, context: Mapping[str, Any]) -> str:
        return self.get_template("description.txt.j2").render(**context)

    def render_run_report(self, context: Mapping[str, Any], output_path: Path):
        """Render the HTML summary of a search run.

        Args:
            context: title, header, generation, coherent, incoherent, capacity,
                summary, plots and elites
            output_path: Output file path
        """
        template = self.get_template("report.html.j2")
        html = template.render(**context)
        output_path = Path(output_path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        output_path.write_text(html, encoding="utf-8")
        logger.info(f"Generated run report: {output_path}")


def elite_rows(elites: List[Any], text_of) -> List[Dict[str, Any]]:
    return [{"key": e.key.to_str(), "fitness": e.fitness, "generation": e.generation,
             "text": text_of(e.game)} for e in elites]
