#!/usr/bin/env node
// Counts newline-terminated lines across the source files of a project tree
// and reports them as "#>> LOC=<n>". Build-artifact directories are excluded
// so the count is the same before and after a build.

import { readdirSync, readFileSync } from "node:fs"
import { join } from "node:path"
import { pathToFileURL } from "node:url"
import { emitMetric, parsePluginArgs, resolveProjectRoot } from "./protocol.js"

const USAGE = `usage: loc [--help] project_root

Reports the line count of a project tree as "#>> LOC=<n>".
project_root may be the project directory or the path of its pom.xml.

  -h, --help     show this help message and exit
  -v, --verbose  accepted for interface compatibility
`

export const EXCLUDED_DIRS = new Set([
  ".git",
  "target",
  "build",
  "dist",
  "out",
  "node_modules",
])

export function countNewlines(content: Buffer): number {
  let count = 0
  for (const byte of content) {
    if (byte === 0x0a) count++
  }
  return count
}

export function countTreeLines(root: string): number {
  let total = 0
  const stack = [root]
  while (stack.length > 0) {
    const dir = stack.pop()!
    for (const entry of readdirSync(dir, { withFileTypes: true })) {
      const path = join(dir, entry.name)
      if (entry.isDirectory()) {
        if (!EXCLUDED_DIRS.has(entry.name)) stack.push(path)
      } else if (entry.isFile()) {
        total += countNewlines(readFileSync(path))
      }
    }
  }
  return total
}

function main(): void {
  const { projectRoot } = parsePluginArgs(process.argv.slice(2), USAGE)
  const root = resolveProjectRoot(projectRoot)
  emitMetric("LOC", countTreeLines(root))
}

if (import.meta.url === pathToFileURL(process.argv[1] ?? "").href) {
  try {
    main()
  } catch (err) {
    process.stderr.write(`loc: ${err instanceof Error ? err.message : err}\n`)
    process.exit(1)
  }
}
