// Parser for the flat table serialization, so tasks render as grids rather
// than raw strings.  Format:
//   [TITLE] title [HEADER] col1 | col2 [ROW 1] a | b [ROW 2] c | d
// A fullwidth bar stands in for a literal "|" inside a cell.

export interface ParsedTable {
  title: string;
  headers: string[];
  rows: string[][];
}

const ROW_TOKEN = / \[ROW (\d+)\] /g;
const ESCAPED_BAR = "｜";

function unescapeCell(text: string): string {
  return text.replaceAll(ESCAPED_BAR, "|");
}

function splitCells(segment: string): string[] {
  return segment.split(" | ").map(unescapeCell);
}

export function parseSerializedTable(s: string): ParsedTable {
  if (!s.startsWith("[TITLE] ")) {
    throw new Error("expected leading [TITLE] segment");
  }
  const headerPos = s.indexOf(" [HEADER] ");
  if (headerPos < 0) {
    throw new Error("missing [HEADER] segment");
  }
  const title = unescapeCell(s.slice("[TITLE] ".length, headerPos));
  const body = s.slice(headerPos + " [HEADER] ".length);

  const matches = [...body.matchAll(ROW_TOKEN)];
  const headerEnd = matches.length ? matches[0].index! : body.length;
  const headers = splitCells(body.slice(0, headerEnd));

  const rows: string[][] = [];
  matches.forEach((m, i) => {
    const start = m.index! + m[0].length;
    const end = i + 1 < matches.length ? matches[i + 1].index! : body.length;
    rows.push(splitCells(body.slice(start, end)));
  });
  return { title, headers, rows };
}

export function renderTableGrid(doc: Document, serialized: string): HTMLElement {
  const parsed = parseSerializedTable(serialized);
  const wrapper = doc.createElement("figure");
  wrapper.className = "table-grid";

  const caption = doc.createElement("figcaption");
  caption.textContent = parsed.title;
  wrapper.appendChild(caption);

  const scroll = doc.createElement("div");
  scroll.className = "table-scroll";
  const table = doc.createElement("table");

  const thead = doc.createElement("thead");
  const headRow = doc.createElement("tr");
  for (const header of parsed.headers) {
    const th = doc.createElement("th");
    th.textContent = header;
    headRow.appendChild(th);
  }
  thead.appendChild(headRow);
  table.appendChild(thead);

  const tbody = doc.createElement("tbody");
  for (const row of parsed.rows) {
    const tr = doc.createElement("tr");
    for (const cell of row) {
      const td = doc.createElement("td");
      td.textContent = cell;
      tr.appendChild(td);
    }
    tbody.appendChild(tr);
  }
  table.appendChild(tbody);
  scroll.appendChild(table);
  wrapper.appendChild(scroll);
  return wrapper;
}
