import { existsSync, statSync } from "node:fs"
import { dirname, resolve } from "node:path"

const METRIC_NAME = /^[A-Za-z0-9_.-]+$/

/** Shortest decimal text that parses back to exactly this value. */
export function renderValue(value: number): string {
  if (!Number.isFinite(value)) {
    throw new Error(`metric value must be finite, got ${value}`)
  }
  return Object.is(value, -0) ? "0" : String(value)
}

export function formatMetricLine(name: string, value: number): string {
  if (!METRIC_NAME.test(name)) {
    throw new Error(`invalid metric name: ${JSON.stringify(name)}`)
  }
  return `#>> ${name}=${renderValue(value)}`
}

/** Print one value on the stdout protocol channel. */
export function emitMetric(name: string, value: number): void {
  process.stdout.write(formatMetricLine(name, value) + "\n")
}

/**
 * The pipeline passes the project directory; some callers hand over the path
 * of the pom.xml inside it instead. Accept both.
 */
export function resolveProjectRoot(arg: string): string {
  const path = resolve(arg)
  if (!existsSync(path)) {
    throw new Error(`project root ${path} does not exist`)
  }
  return statSync(path).isDirectory() ? path : dirname(path)
}

/** Shared minimal CLI contract: --help/-h and exactly one positional. */
export function parsePluginArgs(
  argv: string[],
  usage: string
): { projectRoot: string } {
  const positionals: string[] = []
  for (const arg of argv) {
    if (arg === "--help" || arg === "-h") {
      process.stdout.write(usage)
      process.exit(0)
    } else if (arg === "--verbose" || arg === "-v") {
      continue
    } else {
      positionals.push(arg)
    }
  }
  if (positionals.length !== 1) {
    process.stderr.write(usage)
    process.exit(2)
  }
  return { projectRoot: positionals[0] }
}
