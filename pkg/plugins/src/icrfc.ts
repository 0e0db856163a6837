#!/usr/bin/env node
// Approximates the response-for-class of the compiled artifacts: every
// .class file under the project tree is disassembled with javap, the lines
// declared "public" are counted, and each contributing file adds its count
// minus one for the class declaration line itself. The total is reported as
// "#>> IC-RFC=<total>".
//
// The class files are produced by the pipeline's build stage; this script
// never compiles anything itself.

import { pathToFileURL } from "node:url"
import { executeCommand } from "./lines.js"
import { emitMetric, parsePluginArgs, resolveProjectRoot } from "./protocol.js"

const USAGE = `usage: icrfc [--help] project_root

Reports the IC-RFC metric of a compiled project tree as "#>> IC-RFC=<n>".
project_root may be the project directory or the path of its pom.xml; a
javap-compatible disassembler must be on PATH.

  -h, --help     show this help message and exit
  -v, --verbose  accepted for interface compatibility
`

export function countPublicLines(lines: Iterable<string>): number {
  let count = 0
  for (const line of lines) {
    if (line.trim().startsWith("public")) count++
  }
  return count
}

/** A file with no public lines contributes nothing; otherwise the class
 * declaration line is not a method and is not counted. */
export function fileContribution(publicLines: number): number {
  return publicLines > 0 ? publicLines - 1 : 0
}

export async function icRfcTotal(root: string): Promise<number> {
  let total = 0
  for await (const found of executeCommand("find", [root, "-name", "*.class"])) {
    const classFile = found.trim()
    if (!classFile) continue
    let publicLines = 0
    try {
      for await (const line of executeCommand("javap", [classFile])) {
        if (line.trim().startsWith("public")) publicLines++
      }
    } catch (err) {
      process.stderr.write(
        `icrfc: warning: skipping ${classFile}: ` +
          `${err instanceof Error ? err.message : err}\n`
      )
      continue
    }
    total += fileContribution(publicLines)
  }
  return total
}

async function main(): Promise<void> {
  const { projectRoot } = parsePluginArgs(process.argv.slice(2), USAGE)
  const root = resolveProjectRoot(projectRoot)
  emitMetric("IC-RFC", await icRfcTotal(root))
}

if (import.meta.url === pathToFileURL(process.argv[1] ?? "").href) {
  main().catch((err) => {
    process.stderr.write(`icrfc: ${err instanceof Error ? err.message : err}\n`)
    process.exit(1)
  })
}
