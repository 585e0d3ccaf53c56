/** Native HTML5 drag-and-drop reordering for the entered-codes list.
 * The list items carry data-index; a drop reports (from, to) to the caller,
 * which owns the array and re-renders. */

export function attachDragReorder(
  listEl: HTMLElement,
  onReorder: (from: number, to: number) => void,
): void {
  let fromIndex: number | null = null;

  listEl.addEventListener("dragstart", (event) => {
    const item = (event.target as HTMLElement).closest<HTMLElement>("[data-index]");
    if (!item) return;
    fromIndex = Number(item.dataset.index);
    event.dataTransfer?.setData("text/plain", item.dataset.index ?? "");
  });

  listEl.addEventListener("dragover", (event) => {
    event.preventDefault(); // required to allow dropping
  });

  listEl.addEventListener("drop", (event) => {
    event.preventDefault();
    const item = (event.target as HTMLElement).closest<HTMLElement>("[data-index]");
    if (!item || fromIndex === null) return;
    const toIndex = Number(item.dataset.index);
    if (toIndex !== fromIndex) onReorder(fromIndex, toIndex);
    fromIndex = null;
  });
}
